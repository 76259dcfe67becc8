// Parameter forms generated from the operator schemas served by /ops, so
// the panels stay in lockstep with the backend registry.

import type { OpSchema, ParamSchema } from "./api.js";

export function defaultParams(schema: OpSchema): Record<string, unknown> {
  const params: Record<string, unknown> = {};
  for (const [key, p] of Object.entries(schema.params)) {
    if (p.required) {
      params[key] = p.type === "number" ? 0 : p.type === "coords" ? [] : "";
    } else if (p.default !== null && p.default !== undefined) {
      params[key] = p.default;
    }
  }
  return params;
}

export function coerceValue(p: ParamSchema, raw: string): unknown {
  if (p.type === "number") {
    const value = Number(raw);
    if (Number.isNaN(value)) throw new Error(`not a number: ${raw}`);
    return value;
  }
  if (p.type === "coords") {
    const value = JSON.parse(raw);
    if (!Array.isArray(value) || !value.every(
        (pt) => Array.isArray(pt) && pt.length === 2
          && pt.every((c) => typeof c === "number"))) {
      throw new Error("coords must be [[x, y], ...]");
    }
    return value;
  }
  return raw;
}

export function renderParamForm(
  doc: Document,
  schema: OpSchema,
  values: Record<string, unknown>,
  onChange: (key: string, value: unknown) => void,
): HTMLElement {
  const form = doc.createElement("div");
  form.className = "param-form";
  for (const [key, p] of Object.entries(schema.params)) {
    const row = doc.createElement("label");
    row.className = "param-row";
    const caption = doc.createElement("span");
    caption.textContent = p.required ? `${key} *` : key;
    row.appendChild(caption);
    let input: HTMLInputElement | HTMLSelectElement;
    if (p.choices) {
      input = doc.createElement("select");
      for (const choice of p.choices) {
        const option = doc.createElement("option");
        option.value = choice;
        option.textContent = choice;
        input.appendChild(option);
      }
    } else {
      input = doc.createElement("input");
      input.type = "text";
    }
    input.dataset.param = key;
    const current = values[key];
    input.value = current === undefined ? "" :
      p.type === "coords" ? JSON.stringify(current) : String(current);
    input.addEventListener("change", () => {
      try {
        input.classList.remove("param-invalid");
        onChange(key, coerceValue(p, input.value));
      } catch {
        input.classList.add("param-invalid");
      }
    });
    row.appendChild(input);
    form.appendChild(row);
  }
  return form;
}
