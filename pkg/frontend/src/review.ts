// Delineation review: slice scrubber, green-overlay toggle, region badge,
// and export links. Images come straight from the service; nothing is
// redrawn client-side.

import { Api, DelineationDoc, JobState } from "./api.js";

export class ReviewView {
  overlayVisible = true;
  slice: number;

  constructor(
    private doc: Document,
    private api: Api,
    private sid: string,
    private job: JobState,
    private delineation: DelineationDoc,
    private sliceCount: number,
  ) {
    this.slice = delineation.slices[0]?.index ?? 0;
  }

  regionOf(index: number): string | null {
    const hit = this.delineation.slices.find((s) => s.index === index);
    return hit ? hit.region : null;
  }

  render(root: HTMLElement): void {
    root.textContent = "";
    root.className = "review";
    if (this.job.state === "failed") {
      const card = this.doc.createElement("div");
      card.className = "error-card";
      card.textContent = `job failed: ${this.job.error?.code ?? "unknown"} `
        + `${this.job.error?.message ?? ""}`;
      root.appendChild(card);
      return;
    }
    const img = this.doc.createElement("img");
    img.className = "review-image";
    root.appendChild(img);

    const badge = this.doc.createElement("span");
    badge.className = "region-badge";
    root.appendChild(badge);

    const scrubber = this.doc.createElement("input");
    scrubber.type = "range";
    scrubber.min = "0";
    scrubber.max = String(this.sliceCount - 1);
    scrubber.value = String(this.slice);
    scrubber.className = "scrubber";
    scrubber.addEventListener("input", () => {
      this.slice = Number(scrubber.value);
      this.update(root);
    });
    root.appendChild(scrubber);

    const toggle = this.doc.createElement("button");
    toggle.className = "overlay-toggle";
    toggle.addEventListener("click", () => {
      this.overlayVisible = !this.overlayVisible;
      this.update(root);
    });
    root.appendChild(toggle);

    const exportJson = this.doc.createElement("a");
    exportJson.className = "export-json";
    exportJson.textContent = "download delineation JSON";
    exportJson.href = this.api.base + (this.job.result?.delineation ?? "#");
    root.appendChild(exportJson);

    const exportPng = this.doc.createElement("a");
    exportPng.className = "export-overlay";
    exportPng.textContent = "download overlay PNG";
    root.appendChild(exportPng);

    this.update(root);
  }

  update(root: HTMLElement): void {
    const img = root.querySelector<HTMLImageElement>(".review-image");
    const badge = root.querySelector<HTMLElement>(".region-badge");
    const toggle = root.querySelector<HTMLElement>(".overlay-toggle");
    const exportPng = root.querySelector<HTMLAnchorElement>(".export-overlay");
    const region = this.regionOf(this.slice);
    const overlayTemplate = this.job.result?.overlays ?? "";
    const overlayUrl = this.api.overlayUrl(overlayTemplate, this.slice);
    const baseUrl = this.api.slicePngUrl(this.sid, this.slice, 1500, 300);
    if (img) {
      // contours exist only inside the detected range; elsewhere the overlay
      // endpoint returns the bare windowed slice anyway
      img.src = this.overlayVisible && region ? overlayUrl : baseUrl;
    }
    if (badge) badge.textContent = region ?? "outside range";
    if (toggle) toggle.textContent = this.overlayVisible ? "hide overlay" : "show overlay";
    if (exportPng) exportPng.href = overlayUrl;
  }
}
