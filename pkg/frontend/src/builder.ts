// Pipeline builder: editable stage list with live per-stage previews.
// Every edit triggers a run on the current slice; responses are matched by
// a sequence number so a stale response never overwrites a newer preview.

import { Api, ApiError, OpSchema, RunResult } from "./api.js";
import { defaultParams, renderParamForm } from "./schemaForm.js";
import { PipelineState, TOOL_GROUPS } from "./state.js";

export class BuilderView {
  pipeline = new PipelineState();
  lastRun: RunResult | null = null;
  lastError: ApiError | null = null;
  private runSeq = 0;
  private appliedSeq = 0;
  private debounceHandle: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private doc: Document,
    private api: Api,
    private ops: Record<string, OpSchema>,
    private getSlice: () => number,
    public sid: string,
    public debounceMs = 150,
  ) {}

  render(root: HTMLElement): void {
    root.textContent = "";
    root.className = "builder";
    const palette = this.doc.createElement("div");
    palette.className = "palette";
    for (const [group, info] of Object.entries(TOOL_GROUPS)) {
      if (info.kind !== "ops" || info.ops.length === 0) continue;
      const header = this.doc.createElement("div");
      header.className = "palette-group";
      header.textContent = group;
      palette.appendChild(header);
      for (const op of info.ops) {
        if (!(op in this.ops)) continue;
        const button = this.doc.createElement("button");
        button.className = "palette-op";
        button.dataset.op = op;
        button.textContent = op;
        button.title = this.ops[op].doc;
        button.addEventListener("click", () => {
          this.pipeline.addStage(op, defaultParams(this.ops[op]));
          this.render(root);
          this.scheduleRun(root);
        });
        palette.appendChild(button);
      }
    }
    root.appendChild(palette);

    const stageList = this.doc.createElement("div");
    stageList.className = "stage-list";
    this.pipeline.stages.forEach((stage, index) => {
      const card = this.doc.createElement("div");
      card.className = "stage-card" + (stage.enabled ? "" : " stage-disabled");
      card.dataset.stage = String(index);
      const title = this.doc.createElement("div");
      title.className = "stage-title";
      title.textContent = `${index}: ${stage.op}`;
      card.appendChild(title);

      const controls = this.doc.createElement("div");
      controls.className = "stage-controls";
      const mk = (label: string, handler: () => void) => {
        const b = this.doc.createElement("button");
        b.textContent = label;
        b.addEventListener("click", () => {
          handler();
          this.render(root);
          this.scheduleRun(root);
        });
        controls.appendChild(b);
      };
      mk("up", () => this.pipeline.moveStage(index, -1));
      mk("down", () => this.pipeline.moveStage(index, +1));
      mk(stage.enabled ? "disable" : "enable", () => this.pipeline.toggleStage(index));
      mk("remove", () => this.pipeline.removeStage(index));
      card.appendChild(controls);

      card.appendChild(renderParamForm(this.doc, this.ops[stage.op], stage.params,
        (key, value) => {
          stage.params[key] = value;
          this.scheduleRun(root);
        }));

      const thumb = this.doc.createElement("img");
      thumb.className = "stage-thumb";
      thumb.dataset.thumb = String(index);
      card.appendChild(thumb);
      const errorBox = this.doc.createElement("div");
      errorBox.className = "stage-error";
      errorBox.dataset.error = String(index);
      card.appendChild(errorBox);
      stageList.appendChild(card);
    });
    root.appendChild(stageList);

    const specPane = this.doc.createElement("div");
    specPane.className = "spec-pane";
    const specText = this.doc.createElement("textarea");
    specText.className = "spec-json";
    specText.value = this.pipeline.toJson();
    specPane.appendChild(specText);
    const importButton = this.doc.createElement("button");
    importButton.className = "spec-import";
    importButton.textContent = "import spec";
    importButton.addEventListener("click", () => {
      try {
        this.pipeline.loadJson(specText.value);
        this.render(root);
        this.scheduleRun(root);
      } catch (err) {
        specText.classList.add("param-invalid");
      }
    });
    specPane.appendChild(importButton);
    const saveButton = this.doc.createElement("button");
    saveButton.className = "spec-save";
    saveButton.textContent = "save to session";
    saveButton.addEventListener("click", () => {
      void this.api.savePipeline(this.sid, this.pipeline.toSpec());
    });
    specPane.appendChild(saveButton);
    root.appendChild(specPane);

    const finalPane = this.doc.createElement("div");
    finalPane.className = "final-pane";
    const finalImg = this.doc.createElement("img");
    finalImg.className = "final-preview";
    finalPane.appendChild(finalImg);
    const digestLabel = this.doc.createElement("div");
    digestLabel.className = "final-digest";
    finalPane.appendChild(digestLabel);
    root.appendChild(finalPane);

    this.applyRunResult(root);
  }

  scheduleRun(root: HTMLElement): void {
    if (this.debounceHandle !== null) clearTimeout(this.debounceHandle);
    this.debounceHandle = setTimeout(() => {
      this.debounceHandle = null;
      void this.runNow(root);
    }, this.debounceMs);
  }

  async runNow(root: HTMLElement): Promise<RunResult | null> {
    const seq = ++this.runSeq;
    try {
      const result = await this.api.run(this.sid, this.pipeline.toSpec(),
                                        this.getSlice());
      if (seq < this.appliedSeq) return null; // stale response, discard
      this.appliedSeq = seq;
      this.lastRun = result;
      this.lastError = null;
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      if (seq < this.appliedSeq) return null;
      this.appliedSeq = seq;
      this.lastRun = null;
      this.lastError = err;
    }
    this.applyRunResult(root);
    return this.lastRun;
  }

  private applyRunResult(root: HTMLElement): void {
    for (const box of Array.from(root.querySelectorAll<HTMLElement>(".stage-error"))) {
      box.textContent = "";
    }
    for (const card of Array.from(root.querySelectorAll<HTMLElement>(".stage-card"))) {
      card.classList.remove("stage-failed");
    }
    if (this.lastError) {
      const stage = this.lastError.body.detail?.stage;
      if (typeof stage === "number") {
        const box = root.querySelector<HTMLElement>(`[data-error="${stage}"]`);
        if (box) box.textContent = `${this.lastError.body.code}: ${this.lastError.body.message}`;
        const card = root.querySelector<HTMLElement>(`[data-stage="${stage}"]`);
        if (card) card.classList.add("stage-failed");
      }
      return;
    }
    if (!this.lastRun) return;
    // stage results index into enabled stages by their original index
    for (const stage of this.lastRun.stages) {
      const thumb = root.querySelector<HTMLImageElement>(
        `[data-thumb="${stage.index}"]`);
      if (thumb) {
        thumb.src = this.api.base + stage.preview;
        thumb.dataset.digest = stage.digest;
      }
    }
    const finalImg = root.querySelector<HTMLImageElement>(".final-preview");
    const digestLabel = root.querySelector<HTMLElement>(".final-digest");
    const last = this.lastRun.stages[this.lastRun.stages.length - 1];
    if (finalImg) {
      finalImg.src = last ? this.api.base + last.preview
        : this.api.base + this.lastRun.input_preview;
      finalImg.dataset.digest = this.lastRun.output;
    }
    if (digestLabel) digestLabel.textContent = `digest ${this.lastRun.output}`;
  }
}
