/** Phase 1: structured clinical data entry with optional file uploads.
 *
 * Every field except case_id is visibly optional - partial records are the
 * normal case, not an error state. Validation bounds come from the shared
 * manifest; violations the server still finds are mapped back onto the
 * offending fields.
 */

import { ApiClient, ApiError } from "./api";
import { clear, el } from "./dom";
import type { RulesManifest } from "./types";
import { checkUploadName, validateForm } from "./validation";

/** FileReader-based read: works in browsers and in headless DOM runtimes
 * whose File objects lack the newer arrayBuffer()/stream() methods. */
function readFileBytes(file: File): Promise<Uint8Array> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onerror = () => reject(reader.error);
    reader.onload = () => resolve(new Uint8Array(reader.result as ArrayBuffer));
    reader.readAsArrayBuffer(file);
  });
}

interface FieldSpec {
  name: string;
  label: string;
  unit?: string;
}

const TEXT_FIELDS: FieldSpec[] = [
  { name: "case_id", label: "Case ID" },
  { name: "age", label: "Age", unit: "years" },
  { name: "sex", label: "Sex (male/female/unknown)" },
  { name: "education", label: "Education", unit: "years" },
  { name: "cdr", label: "CDR global score (0/0.5/1/2/3)" },
  { name: "mmse", label: "MMSE", unit: "0-30" },
  { name: "moca", label: "MoCA", unit: "0-30" },
  { name: "adas11", label: "ADAS-11" },
  { name: "adas13", label: "ADAS-13" },
  { name: "faq", label: "FAQ", unit: "0-30" },
  { name: "csf_abeta42", label: "CSF Abeta42", unit: "pg/mL" },
  { name: "csf_tau", label: "CSF tau", unit: "pg/mL" },
  { name: "csf_ptau", label: "CSF p-tau", unit: "pg/mL" },
  { name: "apoe_genotype", label: "APOE genotype (x/y)" },
  { name: "doctor_prompt", label: "Instructions for the agent" },
];

export class CaseForm {
  readonly root: HTMLElement;
  private rules: RulesManifest = {};
  private mriFile: File | null = null;
  private vcfFile: File | null = null;
  private readonly inputs = new Map<string, HTMLInputElement>();
  private readonly errors = new Map<string, HTMLElement>();
  private banner: HTMLElement;

  constructor(
    private readonly client: ApiClient,
    private readonly onSubmitted: (sessionId: string) => void,
  ) {
    this.root = el("section", { class: "case-form" });
    this.banner = el("p", { class: "banner", role: "alert" });
    this.render();
  }

  async load(): Promise<void> {
    this.rules = await this.client.validationRules();
  }

  private render(): void {
    clear(this.root);
    this.root.append(el("h2", { text: "New case" }));
    this.root.append(this.banner);
    const form = el("form", { novalidate: "true" });

    for (const spec of TEXT_FIELDS) {
      const input = el("input", {
        name: spec.name,
        id: `field-${spec.name}`,
        autocomplete: "off",
      });
      const error = el("span", { class: "field-error", "data-for": spec.name });
      const optional = spec.name === "case_id" ? "" : " (optional)";
      const labelText = spec.unit
        ? `${spec.label} [${spec.unit}]${optional}`
        : `${spec.label}${optional}`;
      const row = el("label", { class: "field-row" }, [labelText, input, error]);
      this.inputs.set(spec.name, input);
      this.errors.set(spec.name, error);
      form.append(row);
    }

    const mriInput = el("input", { type: "file", id: "field-mri", accept: ".nii,.nii.gz" });
    mriInput.addEventListener("change", () => {
      this.setMriFile(mriInput.files?.[0] ?? null);
    });
    const vcfInput = el("input", { type: "file", id: "field-vcf", accept: ".vcf,.vcf.gz" });
    vcfInput.addEventListener("change", () => {
      this.setVcfFile(vcfInput.files?.[0] ?? null);
    });
    const mriError = el("span", { class: "field-error", "data-for": "mri" });
    const vcfError = el("span", { class: "field-error", "data-for": "vcf" });
    this.errors.set("mri", mriError);
    this.errors.set("vcf", vcfError);
    form.append(
      el("label", { class: "field-row" }, ["Structural MRI (NIfTI, optional)", mriInput, mriError]),
      el("label", { class: "field-row" }, ["Genomic data (VCF, optional)", vcfInput, vcfError]),
    );

    const submit = el("button", { type: "submit", text: "Create case and run" });
    form.append(submit);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });
    this.root.append(form);
  }

  /** Also used by tests, where file inputs cannot be populated. */
  setMriFile(file: File | null): void {
    this.mriFile = file;
    this.showError("mri", file ? checkUploadName("mri", file.name) ?? "" : "");
  }

  setVcfFile(file: File | null): void {
    this.vcfFile = file;
    this.showError("vcf", file ? checkUploadName("vcf", file.name) ?? "" : "");
  }

  private showError(name: string, message: string): void {
    const slot = this.errors.get(name);
    if (slot) slot.textContent = message;
  }

  private clearErrors(): void {
    for (const [, slot] of this.errors) slot.textContent = "";
    this.banner.textContent = "";
  }

  async submit(): Promise<void> {
    this.clearErrors();
    const raw: Record<string, string> = {};
    for (const [name, input] of this.inputs) raw[name] = input.value;
    const { record, errors } = validateForm(raw, this.rules);

    if (this.mriFile) {
      const problem = checkUploadName("mri", this.mriFile.name);
      if (problem) errors.mri = problem;
    }
    if (this.vcfFile) {
      const problem = checkUploadName("vcf", this.vcfFile.name);
      if (problem) errors.vcf = problem;
    }
    if (Object.keys(errors).length > 0) {
      for (const [name, message] of Object.entries(errors)) {
        this.showError(name, message);
      }
      return; // no request leaves the client while local validation fails
    }

    try {
      const sessionId = await this.client.createCase(record, {
        mri: this.mriFile
          ? { name: this.mriFile.name, bytes: await readFileBytes(this.mriFile) }
          : undefined,
        vcf: this.vcfFile
          ? { name: this.vcfFile.name, bytes: await readFileBytes(this.vcfFile) }
          : undefined,
      });
      await this.client.run(sessionId);
      this.onSubmitted(sessionId);
    } catch (error) {
      if (error instanceof ApiError) {
        for (const violation of error.violations) {
          const field = violation.split(" ")[0].replace(":", "");
          if (this.errors.has(field)) this.showError(field, violation);
        }
        this.banner.textContent =
          error.violations.join("; ") || `Submission failed: ${error.message}`;
      } else {
        this.banner.textContent = "Network failure; please retry.";
      }
    }
  }
}
