/** Wire types for the IWP HTTP API. These mirror the server's JSON exactly. */

export type Level = "L1" | "L2" | "L3";

export interface Member {
  member_id: string;
  role: "child" | "custodian";
  display_name: string;
  avatar_choice: string | null;
}

export interface ParentalView {
  level: Level;
  l2_selections: string[];
  set_at: string | null;
  expires_at: string | null;
}

export interface BackendView {
  level: Level;
  l2_selections: string[];
  anonymize: boolean;
  set_at: string | null;
  expires_at: string | null;
}

export interface CybersafetyView {
  level: Level;
  enabled_mechanisms: string[];
  enforce_mechanisms: string[];
  set_at: string | null;
  expires_at: string | null;
}

export interface ConsentRecordView {
  record_id: string;
  option_kind: string;
  option: OptionDoc;
  proposed_by: string;
  state: string;
  proposed_at: string | null;
  decided_at: string | null;
  expires_at: string | null;
}

export interface PolicyView {
  schema: string;
  household_id: string;
  version: number;
  members: Member[];
  parental: ParentalView;
  backend: BackendView;
  cybersafety: CybersafetyView;
  consents: ConsentRecordView[];
}

/** Option proposal payload (the `option` field of POST /policy/options). */
export interface OptionDoc {
  kind: "parental" | "backend" | "cybersafety";
  parental?: { level: Level; l2_selections: string[] };
  backend?: { level: Level; l2_selections: string[]; anonymize: boolean };
  cybersafety?: {
    level: Level;
    enabled_mechanisms: string[];
    enforce_mechanisms: string[];
  };
}

export type EvidenceAccess = "none" | "names_only" | "portions_link";

/** A rendered incident notification pushed on /notify/stream. */
export interface IncidentNotification {
  recipient: "child" | "custodian";
  text: string;
  evidence_access: EvidenceAccess;
  evidence_url?: string;
  mechanism?: string;
  exec_id?: string;
}

export interface ConsentRequestEvent {
  type: "consent_request";
  record_id: string;
  option: OptionDoc;
  proposed_by: string;
}

export interface HeartbeatEvent {
  type: "heartbeat";
  member_id: string;
  status: "unresponsive" | "recovered";
}

export type StreamEvent = IncidentNotification | ConsentRequestEvent | HeartbeatEvent;

export function isConsentRequest(ev: StreamEvent): ev is ConsentRequestEvent {
  return (ev as ConsentRequestEvent).type === "consent_request";
}

export function isHeartbeat(ev: StreamEvent): ev is HeartbeatEvent {
  return (ev as HeartbeatEvent).type === "heartbeat";
}

export function isIncident(ev: StreamEvent): ev is IncidentNotification {
  return typeof (ev as IncidentNotification).text === "string" && !("type" in ev);
}

export type FlagClaim =
  | "cyberbullying"
  | "grooming"
  | "aggressive"
  | "fake_identity"
  | "false_information"
  | "sensitive_image";

export type FlagDirection = "missed_detection" | "wrong_detection";

export interface FlagSubmission {
  member_id: string;
  target_ref: string;
  claim: FlagClaim;
  direction: FlagDirection;
  comment?: string;
  data_class?: string;
}
