import { beforeEach, describe, expect, it } from "vitest";

import { Api } from "../src/api.js";
import { ReviewView } from "../src/review.js";
import { MockService } from "./mock-service.js";

let service: MockService;
let api: Api;

beforeEach(() => {
  service = new MockService();
  service.install();
  api = new Api("");
});

async function makeView(): Promise<[ReviewView, HTMLElement]> {
  const job = await api.job("job42");
  const doc = await api.delineation(job.result!.delineation);
  const view = new ReviewView(document, api, service.sid, job, doc, 60);
  const root = document.createElement("div");
  view.render(root);
  return [view, root];
}

describe("delineation review", () => {
  it("shows the overlay and region badge inside the range", async () => {
    const [view, root] = await makeView();
    view.slice = 40;
    view.update(root);
    const img = root.querySelector<HTMLImageElement>(".review-image")!;
    expect(img.src).toContain("/overlays/40.png");
    expect(root.querySelector(".region-badge")!.textContent).toBe("distal");
  });

  it("region badge tracks the three zones", async () => {
    const [view, root] = await makeView();
    const seen: string[] = [];
    for (const index of [20, 30, 50]) {
      view.slice = index;
      view.update(root);
      seen.push(root.querySelector(".region-badge")!.textContent!);
    }
    expect(seen).toEqual(["proximal", "medial", "distal"]);
  });

  it("outside the range the base slice is shown", async () => {
    const [view, root] = await makeView();
    view.slice = 5;
    view.update(root);
    const img = root.querySelector<HTMLImageElement>(".review-image")!;
    expect(img.src).toContain("/slices/5.png");
    expect(root.querySelector(".region-badge")!.textContent).toBe("outside range");
  });

  it("overlay toggle switches to the base slice", async () => {
    const [view, root] = await makeView();
    view.slice = 40;
    view.update(root);
    root.querySelector<HTMLButtonElement>(".overlay-toggle")!.click();
    const img = root.querySelector<HTMLImageElement>(".review-image")!;
    expect(img.src).toContain("/slices/40.png");
    expect(view.overlayVisible).toBe(false);
  });

  it("failed jobs render an error card", async () => {
    const view = new ReviewView(document, api, service.sid,
      { job: "j", state: "failed",
        error: { code: "RangeNotFound", message: "no trochanter", detail: {} } },
      { v: 1, side: "", volume_digest: "", slices: [] }, 60);
    const root = document.createElement("div");
    view.render(root);
    expect(root.querySelector(".error-card")!.textContent).toContain("RangeNotFound");
  });

  it("export links point at the service artifacts", async () => {
    const [view, root] = await makeView();
    view.slice = 30;
    view.update(root);
    expect(root.querySelector<HTMLAnchorElement>(".export-json")!.href)
      .toContain("/delineation/job42.json");
    expect(root.querySelector<HTMLAnchorElement>(".export-overlay")!.href)
      .toContain("/overlays/30.png");
  });
});
