// App shell: upload a series (browse file), flip between the original and
// processed slice (show image), build pipelines, run and review a
// delineation, and enter the blinded comparison mode.

import { Api, DelineationDoc, JobState } from "./api.js";
import { BuilderView } from "./builder.js";
import { CompareView } from "./compare.js";
import { ReviewView } from "./review.js";
import { initialToolPanel, ToolPanelState } from "./state.js";

export class App {
  api = new Api("");
  panel: ToolPanelState | null = null;
  sid: string | null = null;
  builder: BuilderView | null = null;

  constructor(private doc: Document) {}

  async start(): Promise<void> {
    const root = this.doc.getElementById("app");
    if (!root) throw new Error("no #app element");
    const upload = this.doc.getElementById("upload") as HTMLInputElement | null;
    upload?.addEventListener("change", () => {
      const file = upload.files?.[0];
      if (file) void this.loadSeries(file, root);
    });
  }

  async loadSeries(file: Blob, root: HTMLElement): Promise<void> {
    const info = await this.api.uploadZip(file);
    this.sid = info.session;
    this.panel = initialToolPanel(info.slices);
    const ops = await this.api.ops();
    this.builder = new BuilderView(this.doc, this.api, ops,
      () => this.panel!.slice, info.session);
    this.renderShell(root);
  }

  renderShell(root: HTMLElement): void {
    if (!this.sid || !this.panel || !this.builder) return;
    root.textContent = "";
    const tabs = this.doc.createElement("nav");
    const body = this.doc.createElement("main");
    const views: Record<string, () => void> = {
      "show image": () => this.renderShow(body),
      "pipeline builder": () => this.builder!.render(body),
      "delineate": () => void this.renderDelineate(body),
    };
    for (const [name, show] of Object.entries(views)) {
      const button = this.doc.createElement("button");
      button.textContent = name;
      button.addEventListener("click", show);
      tabs.appendChild(button);
    }
    root.appendChild(tabs);
    root.appendChild(body);
    this.renderShow(body);
  }

  renderShow(body: HTMLElement): void {
    if (!this.sid || !this.panel) return;
    body.textContent = "";
    const original = this.doc.createElement("img");
    original.src = this.api.slicePngUrl(this.sid, this.panel.slice,
                                        this.panel.window, this.panel.level);
    body.appendChild(original);
    const scrubber = this.doc.createElement("input");
    scrubber.type = "range";
    scrubber.min = "0";
    scrubber.max = String(this.panel.sliceCount - 1);
    scrubber.value = String(this.panel.slice);
    scrubber.addEventListener("input", () => {
      this.panel!.slice = Number(scrubber.value);
      this.renderShow(body);
    });
    body.appendChild(scrubber);
  }

  async renderDelineate(body: HTMLElement): Promise<void> {
    if (!this.sid || !this.panel) return;
    body.textContent = "running delineation job…";
    const jid = await this.api.delineate(this.sid, { side: "left" });
    const job: JobState = await this.api.waitForJob(jid);
    if (job.state === "done" && job.result) {
      const doc: DelineationDoc = await this.api.delineation(job.result.delineation);
      const view = new ReviewView(this.doc, this.api, this.sid, job, doc,
                                  this.panel.sliceCount);
      view.render(body);
    } else {
      const view = new ReviewView(this.doc, this.api, this.sid, job,
                                  { v: 1, side: "", volume_digest: "", slices: [] },
                                  this.panel.sliceCount);
      view.render(body);
    }
  }
}

export { Api, BuilderView, CompareView, ReviewView };

if (typeof document !== "undefined" && document.getElementById("app")) {
  void new App(document).start();
}
