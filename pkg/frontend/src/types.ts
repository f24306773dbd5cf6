/** Wire types mirroring the service's JSON responses. */

export interface RecordFields {
  case_id: string;
  [field: string]: string | number | boolean | undefined;
}

export interface PipelineEvent {
  sequence: number;
  stage: string;
  kind: "started" | "tool_ok" | "tool_failed" | "retry" | "fallback" | "finished";
  detail: string;
  timestamp: number;
}

export interface ChatTurn {
  speaker: "user" | "agent";
  text: string;
  timestamp: number;
}

export interface ToolOutcome {
  tool: string;
  status: "ok" | "failed" | "skipped";
  payload: Record<string, unknown>;
  diagnostics: string;
  attempts: number;
}

export interface SessionView {
  session_id: string;
  status: "created" | "planning" | "executing" | "aggregating" | "done" | "failed";
  record: RecordFields;
  plan: unknown;
  outcomes: ToolOutcome[];
  verification_flags: string[];
  has_report: boolean;
  report_versions: number;
  history: ChatTurn[];
  events: PipelineEvent[];
}

export interface Report {
  diagnosis: "CN" | "MCI" | "AD";
  confidence: "High" | "Medium" | "Low";
  justification: {
    clinical_reasoning: string;
    evidence_summary: {
      supporting_evidence: string[];
      contradicting_evidence: string[];
    };
    conflict_resolution: string;
    diagnostic_criteria: string;
  };
  recommendations: string[];
  attachments: string[];
  provenance: "llm" | "guideline_fallback";
  guideline_checksum: string;
}

export type ValidationRule =
  | { type: "string"; required?: boolean }
  | { type: "integer"; min: number; max: number }
  | { type: "number"; min?: number; gt?: number; lt?: number }
  | { type: "enum"; values: Array<string | number> }
  | { type: "pattern"; pattern: string };

export type RulesManifest = Record<string, ValidationRule>;
