/** Client-side record validation driven by the shared rule manifest.
 *
 * The rules are fetched from the service, so the client accepts a record
 * exactly when the service does - there is no second, drifting copy of the
 * bounds here.
 */

import type { RecordFields, RulesManifest, ValidationRule } from "./types";

export function checkField(
  name: string,
  raw: string,
  rule: ValidationRule | undefined,
): { value?: string | number; error?: string } {
  const text = raw.trim();
  if (text === "") {
    if (rule && "required" in rule && rule.required) {
      return { error: `${name} is required` };
    }
    return {};
  }
  if (!rule || rule.type === "string") return { value: text };

  if (rule.type === "pattern") {
    return new RegExp(rule.pattern).test(text)
      ? { value: text }
      : { error: `${name} must match ${rule.pattern}` };
  }
  if (rule.type === "enum") {
    const values = rule.values.map(String);
    if (!values.includes(text)) {
      return { error: `${name} must be one of ${values.join(", ")}` };
    }
    const numeric = Number(text);
    return { value: Number.isNaN(numeric) ? text : numeric };
  }

  const numeric = Number(text);
  if (Number.isNaN(numeric)) return { error: `${name} must be a number` };
  if (rule.type === "integer") {
    if (!Number.isInteger(numeric)) return { error: `${name} must be an integer` };
    if (numeric < rule.min || numeric > rule.max) {
      return { error: `${name} must be between ${rule.min} and ${rule.max}` };
    }
    return { value: numeric };
  }
  if (rule.min !== undefined && numeric < rule.min) {
    return { error: `${name} must be at least ${rule.min}` };
  }
  if (rule.gt !== undefined && numeric <= rule.gt) {
    return { error: `${name} must be greater than ${rule.gt}` };
  }
  if (rule.lt !== undefined && numeric >= rule.lt) {
    return { error: `${name} must be less than ${rule.lt}` };
  }
  return { value: numeric };
}

export interface ValidatedForm {
  record: RecordFields;
  errors: Record<string, string>;
}

export function validateForm(
  raw: Record<string, string>,
  rules: RulesManifest,
): ValidatedForm {
  const record: RecordFields = { case_id: "" };
  const errors: Record<string, string> = {};
  for (const [name, value] of Object.entries(raw)) {
    const { value: parsed, error } = checkField(name, value, rules[name]);
    if (error) errors[name] = error;
    else if (parsed !== undefined) record[name] = parsed;
  }
  if (!record.case_id) errors.case_id = "case_id is required";
  return { record, errors };
}

const MRI_EXTENSIONS = [".nii", ".nii.gz"];
const VCF_EXTENSIONS = [".vcf", ".vcf.gz"];

export function checkUploadName(kind: "mri" | "vcf", filename: string): string | null {
  const allowed = kind === "mri" ? MRI_EXTENSIONS : VCF_EXTENSIONS;
  const lower = filename.toLowerCase();
  return allowed.some((ext) => lower.endsWith(ext))
    ? null
    : `${kind} upload must end with ${allowed.join(" or ")}`;
}
