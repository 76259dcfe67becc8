// Blinded side-by-side comparison. The pair descriptor from /compare has
// already randomized positions and stripped provenance; this view only
// ever sees item ids and image URLs, so nothing it renders can leak which
// delineation is which.

import { Api, PairDescriptor, VerdictBody } from "./api.js";
import {
  ComparisonState, SURVEY_ONE_VERDICTS, SURVEY_TWO_VERDICTS, newComparison,
  submitVerdict,
} from "./state.js";

export class CompareView {
  state: ComparisonState;

  constructor(
    private doc: Document,
    private api: Api,
    private pair: PairDescriptor,
    private sliceIndex: number,
    private survey: "one" | "two",
    private rater: string,
    private region: string,
    public onSubmitted: (() => void) | null = null,
  ) {
    this.state = newComparison(pair.pair,
      [pair.items[0].id, pair.items[1].id], survey);
  }

  render(root: HTMLElement): void {
    root.textContent = "";
    root.className = "compare";
    const panes = this.doc.createElement("div");
    panes.className = "compare-panes";
    this.pair.items.forEach((item, position) => {
      const pane = this.doc.createElement("figure");
      pane.className = "compare-pane";
      const img = this.doc.createElement("img");
      img.src = this.api.overlayUrl(item.overlays, this.sliceIndex);
      img.alt = `delineation ${position + 1}`;
      pane.appendChild(img);
      const caption = this.doc.createElement("figcaption");
      caption.textContent = position === 0 ? "1st delineation" : "2nd delineation";
      pane.appendChild(caption);
      panes.appendChild(pane);
    });
    root.appendChild(panes);

    const verdicts = this.survey === "one" ? SURVEY_ONE_VERDICTS : SURVEY_TWO_VERDICTS;
    const buttons = this.doc.createElement("div");
    buttons.className = "verdict-buttons";
    for (const verdict of verdicts) {
      const button = this.doc.createElement("button");
      button.className = "verdict";
      button.dataset.verdict = verdict;
      button.textContent = verdict.replace("_", " ");
      button.addEventListener("click", () => void this.submit(verdict, root));
      buttons.appendChild(button);
    }
    root.appendChild(buttons);

    const status = this.doc.createElement("div");
    status.className = "verdict-status";
    root.appendChild(status);
  }

  async submit(verdict: string, root: HTMLElement): Promise<void> {
    if (this.state.submitted) return;
    this.state = submitVerdict(this.state, verdict);
    const body: VerdictBody = {
      survey: this.survey,
      rater: this.rater,
      region: this.region,
      verdict,
    };
    if (this.survey === "two") body.position = 0;
    await this.api.verdict(this.state.pair, body);
    const status = root.querySelector<HTMLElement>(".verdict-status");
    if (status) status.textContent = `recorded: ${verdict}`;
    for (const button of Array.from(root.querySelectorAll<HTMLButtonElement>(".verdict"))) {
      button.disabled = true;
    }
    if (this.onSubmitted) this.onSubmitted();
  }
}

// drives n blinded pairs end to end and returns the votes CSV; used by the
// scripted-session test and handy for smoke-testing a live service
export async function runComparisonSession(
  api: Api, sid: string, jobA: string, jobB: string, n: number,
  survey: "one" | "two", rater: string, sliceIndex: number,
  pickVerdict: (index: number) => string,
): Promise<string> {
  for (let i = 0; i < n; i++) {
    const pair = await api.compare(
      { session: sid, job: jobA, source: "manual" },
      { session: sid, job: jobB, source: "automatic" },
      true, i);
    const doc = globalThis.document;
    const root = doc.createElement("div");
    const view = new CompareView(doc, api, pair, sliceIndex, survey, rater,
                                 ["proximal", "medial", "distal"][i % 3]);
    view.render(root);
    const verdict = pickVerdict(i);
    const button = root.querySelector<HTMLButtonElement>(
      `[data-verdict="${verdict}"]`);
    if (!button) throw new Error(`no verdict button ${verdict}`);
    await view.submit(verdict, root);
  }
  return api.votesCsv(sid);
}
