import { describe, expect, it } from "vitest";

import {
  PipelineState, TOOL_GROUPS, initialToolPanel, newComparison, submitVerdict,
} from "../src/state.js";

describe("tool groups", () => {
  it("covers all thirteen groups", () => {
    expect(Object.keys(TOOL_GROUPS)).toHaveLength(13);
    expect(Object.keys(TOOL_GROUPS)).toContain("remove couch");
    expect(Object.keys(TOOL_GROUPS)).toContain("overlap contour");
  });

  it("action groups have no ops", () => {
    for (const info of Object.values(TOOL_GROUPS)) {
      if (info.kind === "action") expect(info.ops).toHaveLength(0);
    }
  });
});

describe("pipeline state", () => {
  it("round-trips through the contract JSON", () => {
    const state = new PipelineState();
    state.name = "demo";
    state.addStage("window", { w: 1500, l: 300 });
    state.addStage("invert");
    state.toggleStage(1);
    const text = state.toJson();
    const loaded = new PipelineState();
    loaded.loadJson(text);
    expect(loaded.toSpec()).toEqual(state.toSpec());
    expect(loaded.stages[1].enabled).toBe(false);
  });

  it("defaults enabled to true on import", () => {
    const state = new PipelineState();
    state.loadJson('{"name":"x","stages":[{"op":"invert","params":{}}]}');
    expect(state.stages[0].enabled).toBe(true);
  });

  it("reorders and removes stages", () => {
    const state = new PipelineState();
    state.addStage("a");
    state.addStage("b");
    state.addStage("c");
    state.moveStage(2, -1);
    expect(state.stages.map((s) => s.op)).toEqual(["a", "c", "b"]);
    state.removeStage(0);
    expect(state.stages.map((s) => s.op)).toEqual(["c", "b"]);
    state.moveStage(0, -1); // clamp at the top
    expect(state.stages.map((s) => s.op)).toEqual(["c", "b"]);
  });

  it("rejects malformed imports", () => {
    const state = new PipelineState();
    expect(() => state.loadJson('{"stages": "nope"}')).toThrow();
  });
});

describe("comparison state", () => {
  it("has no field that could carry provenance", () => {
    const state = newComparison("p1", ["p1-0", "p1-1"], "one");
    const keys = JSON.stringify(Object.keys(state));
    expect(keys).not.toMatch(/source|manual|automatic|provenance/i);
  });

  it("enforces the verdict domain per survey", () => {
    const one = newComparison("p1", ["a", "b"], "one");
    expect(() => submitVerdict(one, "small")).toThrow();
    expect(submitVerdict(one, "both").submitted).toBe(true);
    const two = newComparison("p2", ["a", "b"], "two");
    expect(() => submitVerdict(two, "both")).toThrow();
    expect(submitVerdict(two, "none_needed").verdict).toBe("none_needed");
  });

  it("forbids double submission", () => {
    const state = submitVerdict(newComparison("p", ["a", "b"], "one"), "none");
    expect(() => submitVerdict(state, "both")).toThrow();
  });

  it("tool panel starts mid-stack with overlays on", () => {
    const panel = initialToolPanel(60);
    expect(panel.slice).toBe(30);
    expect(panel.overlayVisible).toBe(true);
  });
});
