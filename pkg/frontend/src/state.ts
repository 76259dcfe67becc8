// Client-side state containers. The comparison state deliberately has no
// field that could hold provenance: blinding is structural, not a flag.

import type { PipelineSpec, StageSpec } from "./api.js";

// the 13 tool groups; processing groups list their registry operators,
// action groups map to service verbs handled by the shell
export const TOOL_GROUPS: Record<string, { ops: string[]; kind: "ops" | "action" }> = {
  "browse file": { ops: [], kind: "action" },
  "show image": { ops: [], kind: "action" },
  "filter": { ops: ["aniso", "kmeans", "meanshift"], kind: "ops" },
  "remove couch": { ops: ["remove_couch", "isolate_bone"], kind: "ops" },
  "point operation": {
    ops: ["window", "brightness", "contrast", "gamma", "invert", "hist_eq",
          "thresh_simple", "thresh_adaptive", "thresh_otsu"],
    kind: "ops",
  },
  "wavelets": { ops: ["wavelet_denoise"], kind: "ops" },
  "edge detector": { ops: ["sobel", "prewitt", "laplace", "canny", "hough_circles"], kind: "ops" },
  "sharpness": { ops: ["unsharp"], kind: "ops" },
  "morphologic": {
    ops: ["dilate", "erode", "open", "close", "mgradient", "tophat", "blackhat", "thin"],
    kind: "ops",
  },
  "blob detection": { ops: ["blob", "mser", "cc", "contours"], kind: "ops" },
  "segmentation": { ops: ["watershed", "floodfill"], kind: "ops" },
  "save": { ops: [], kind: "action" },
  "overlap contour": { ops: [], kind: "action" },
};

export class PipelineState {
  name = "untitled";
  stages: StageSpec[] = [];

  toSpec(): PipelineSpec {
    return {
      name: this.name,
      stages: this.stages.map((s) => ({
        op: s.op,
        params: { ...s.params },
        enabled: s.enabled,
      })),
    };
  }

  toJson(): string {
    return JSON.stringify(this.toSpec(), null, 2);
  }

  loadJson(text: string): void {
    const doc = JSON.parse(text) as PipelineSpec;
    if (typeof doc.name !== "string" || !Array.isArray(doc.stages)) {
      throw new Error('pipeline JSON needs {"name", "stages"}');
    }
    this.name = doc.name;
    this.stages = doc.stages.map((s) => ({
      op: s.op,
      params: { ...(s.params ?? {}) },
      enabled: s.enabled ?? true,
    }));
  }

  addStage(op: string, params: Record<string, unknown> = {}): number {
    this.stages.push({ op, params, enabled: true });
    return this.stages.length - 1;
  }

  removeStage(index: number): void {
    this.stages.splice(index, 1);
  }

  moveStage(index: number, delta: number): void {
    const target = index + delta;
    if (target < 0 || target >= this.stages.length) return;
    const [stage] = this.stages.splice(index, 1);
    this.stages.splice(target, 0, stage);
  }

  toggleStage(index: number): void {
    this.stages[index].enabled = !this.stages[index].enabled;
  }
}

export interface ToolPanelState {
  activeGroup: keyof typeof TOOL_GROUPS;
  slice: number;
  sliceCount: number;
  overlayVisible: boolean;
  window: number;
  level: number;
}

export function initialToolPanel(sliceCount: number): ToolPanelState {
  return {
    activeGroup: "point operation",
    slice: Math.floor(sliceCount / 2),
    sliceCount,
    overlayVisible: true,
    window: 400,
    level: 40,
  };
}

export const SURVEY_ONE_VERDICTS = ["both", "first", "second", "none"] as const;
export const SURVEY_TWO_VERDICTS = ["none_needed", "small", "medium", "large"] as const;

// pair + verdict only; there is nowhere to put provenance before (or after)
// a verdict is submitted
export interface ComparisonState {
  pair: string;
  itemIds: [string, string];
  survey: "one" | "two";
  verdict: string | null;
  submitted: boolean;
}

export function newComparison(pair: string, itemIds: [string, string],
                              survey: "one" | "two"): ComparisonState {
  return { pair, itemIds, survey, verdict: null, submitted: false };
}

export function submitVerdict(state: ComparisonState, verdict: string): ComparisonState {
  if (state.submitted) throw new Error("verdict already submitted");
  const domain = state.survey === "one" ? SURVEY_ONE_VERDICTS : SURVEY_TWO_VERDICTS;
  if (!(domain as readonly string[]).includes(verdict)) {
    throw new Error(`verdict ${verdict} not in survey-${state.survey} domain`);
  }
  return { ...state, verdict, submitted: true };
}
