// Trace record wire format shared with the analysis pipeline (schema v1).
// Every CaptureMessage serializes to exactly one newline-delimited record.

export const SCHEMA_VERSION = 1;

export interface ScopeCounts {
  num_args: number;
  num_local: number;
  num_global: number;
  num_closure: number;
}

export interface StackFrame {
  script_url: string;
  function_name: string;
  line: number;
  column: number;
  scope: ScopeCounts;
  is_eval: boolean;
  is_inline: boolean;
}

export type EventKind =
  | "network_request"
  | "dom_modification"
  | "storage_access"
  | "web_api_call";

export interface CaptureMessage {
  event_kind: EventKind;
  timestamp: number;
  call_stack: StackFrame[];
  payload: Record<string, unknown>;
  page_url?: string;
}

export const EMPTY_SCOPE: ScopeCounts = {
  num_args: 0,
  num_local: 0,
  num_global: 0,
  num_closure: 0,
};

export function serializeRecord(msg: CaptureMessage): string {
  const record: Record<string, unknown> = {
    v: SCHEMA_VERSION,
    event_kind: msg.event_kind,
    timestamp: msg.timestamp,
    call_stack: msg.call_stack,
    payload: msg.payload,
  };
  if (msg.page_url) {
    record.page_url = msg.page_url;
  }
  return JSON.stringify(record);
}

export function serializeLog(messages: CaptureMessage[]): string {
  return messages.map(serializeRecord).join("\n") + (messages.length ? "\n" : "");
}
