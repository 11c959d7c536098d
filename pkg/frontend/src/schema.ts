// Parameter-form logic driven by the server's filter registry. The client
// never invents parameter semantics; it only enforces the declared shape
// (type, required) before a value is allowed to reach the server.

import type { ParamSchema } from "./api.js";

export type ParamValue = string | number;

export interface FieldCheck {
  ok: boolean;
  message?: string;
  value?: ParamValue;
}

// Parse and validate one raw form string against its declared schema.
// Empty input on an optional parameter means "leave unset".
export function checkField(schema: ParamSchema, raw: string): FieldCheck {
  const text = raw.trim();
  if (text === "") {
    if (schema.required) {
      return { ok: false, message: `${schema.name} is required` };
    }
    return { ok: true };
  }
  switch (schema.type) {
    case "string":
      return { ok: true, value: text };
    case "real": {
      const num = Number(text);
      if (!Number.isFinite(num)) {
        return { ok: false, message: `${schema.name} expects a number` };
      }
      return { ok: true, value: num };
    }
    case "int": {
      if (!/^[+-]?\d+$/.test(text)) {
        return { ok: false, message: `${schema.name} expects an integer` };
      }
      return { ok: true, value: Number(text) };
    }
    default:
      // unknown declared type: pass the text through and let the server rule
      return { ok: true, value: text };
  }
}

export interface FormResult {
  ok: boolean;
  values: Record<string, ParamValue>;
  errors: Record<string, string>;
}

// Validate a whole form; only set values are included (optional blanks are
// omitted so server defaults stay in charge).
export function checkForm(
  schemas: ParamSchema[],
  raw: Record<string, string>,
): FormResult {
  const values: Record<string, ParamValue> = {};
  const errors: Record<string, string> = {};
  for (const schema of schemas) {
    const res = checkField(schema, raw[schema.name] ?? "");
    if (!res.ok) {
      errors[schema.name] = res.message ?? "invalid value";
    } else if (res.value !== undefined) {
      values[schema.name] = res.value;
    }
  }
  return { ok: Object.keys(errors).length === 0, values, errors };
}

// Initial text shown in a field: the stored node parameter if present,
// otherwise the schema default, otherwise blank.
export function initialText(
  schema: ParamSchema,
  current: Record<string, unknown> | undefined,
): string {
  const stored = current?.[schema.name];
  if (stored !== undefined && stored !== null) return String(stored);
  if (schema.default !== undefined && schema.default !== null) {
    return String(schema.default);
  }
  return "";
}
