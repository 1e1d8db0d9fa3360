// Best-effort parsing of engine stack-trace strings into trace frames.
// Scope counts are not recoverable from a stack string; they stay 0.

import { EMPTY_SCOPE, StackFrame } from "./trace.js";

// V8: "    at name (url:line:col)" or "    at url:line:col"
const FRAME_WITH_NAME = /^\s*at\s+(.+?)\s+\((.+):(\d+):(\d+)\)\s*$/;
const FRAME_BARE = /^\s*at\s+(.+):(\d+):(\d+)\s*$/;

function frame(
  name: string,
  url: string,
  line: number,
  column: number
): StackFrame {
  const isEval = url.includes("#eval[") || name.startsWith("eval");
  return {
    script_url: url,
    function_name: name === "<anonymous>" ? "" : name,
    line,
    column,
    scope: { ...EMPTY_SCOPE },
    is_eval: isEval,
    is_inline: url.includes("#inline["),
  };
}

export function parseStack(stackText: string, dropFrames = 0): StackFrame[] {
  const frames: StackFrame[] = [];
  for (const line of stackText.split("\n")) {
    let match = FRAME_WITH_NAME.exec(line);
    if (match) {
      frames.push(frame(match[1], match[2], Number(match[3]), Number(match[4])));
      continue;
    }
    match = FRAME_BARE.exec(line);
    if (match) {
      frames.push(frame("", match[1], Number(match[2]), Number(match[3])));
    }
  }
  // drop the capture machinery's own frames so index 0 is the initiator
  return frames.slice(dropFrames);
}

export function captureStack(dropFrames = 1): StackFrame[] {
  const text = new Error().stack ?? "";
  // skip the Error header line implicitly (it never matches) plus our frames
  return parseStack(text, dropFrames);
}
