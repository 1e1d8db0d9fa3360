// Content-script API overrides. Each wrapper emits one CaptureMessage and
// then delegates to the original exactly once; capture failures are logged
// and never alter page behavior.

import { captureStack } from "./stack.js";
import { CaptureMessage, EventKind } from "./trace.js";

export type Emit = (msg: CaptureMessage) => void;

export interface OverrideOptions {
  pageUrl?: string;
  now?: () => number;
  log?: (err: unknown) => void;
}

interface Ctx {
  emit: Emit;
  pageUrl: string;
  now: () => number;
  log: (err: unknown) => void;
  emitted: boolean;
}

function makeCtx(emit: Emit, opts: OverrideOptions): Ctx {
  return {
    emit,
    pageUrl: opts.pageUrl ?? "",
    now: opts.now ?? Date.now,
    log: opts.log ?? (() => {}),
    emitted: false,
  };
}

function record(
  ctx: Ctx,
  kind: EventKind,
  payload: Record<string, unknown>
): void {
  try {
    const msg: CaptureMessage = {
      event_kind: kind,
      timestamp: ctx.now(),
      call_stack: captureStack(2),
      payload,
    };
    if (!ctx.emitted && ctx.pageUrl) {
      msg.page_url = ctx.pageUrl;
    }
    ctx.emitted = true;
    ctx.emit(msg);
  } catch (err) {
    ctx.log(err);
  }
}

type AnyFn = (...args: unknown[]) => unknown;

function wrapMethod(
  ctx: Ctx,
  target: Record<string, unknown>,
  name: string,
  build: (args: unknown[]) => [EventKind, Record<string, unknown>]
): void {
  const original = target[name];
  if (typeof original !== "function") {
    return;
  }
  target[name] = function (this: unknown, ...args: unknown[]) {
    const [kind, payload] = build(args);
    record(ctx, kind, payload);
    return (original as AnyFn).apply(this, args);
  };
}

function wrapAccessor(
  ctx: Ctx,
  target: object,
  name: string,
  build: (mode: "get" | "set", value: unknown) => [EventKind, Record<string, unknown>]
): void {
  const desc = Object.getOwnPropertyDescriptor(target, name);
  if (!desc || !desc.configurable) {
    return;
  }
  Object.defineProperty(target, name, {
    configurable: true,
    enumerable: desc.enumerable,
    get() {
      const [kind, payload] = build("get", undefined);
      record(ctx, kind, payload);
      return desc.get ? desc.get.call(this) : desc.value;
    },
    set(value: unknown) {
      const [kind, payload] = build("set", value);
      record(ctx, kind, payload);
      if (desc.set) {
        desc.set.call(this, value);
      } else {
        desc.value = value;
      }
    },
  });
}

function cookieKey(value: unknown): string {
  const text = String(value ?? "");
  const eq = text.indexOf("=");
  return eq > 0 ? text.slice(0, eq).trim() : "";
}

const DOM_INTERACTION: Array<[string, "get" | "set"]> = [
  ["addEventListener", "set"],
  ["removeEventListener", "set"],
  ["getAttribute", "get"],
  ["setAttribute", "set"],
  ["removeAttribute", "set"],
];

export interface PageLike {
  navigator?: Record<string, unknown>;
  document?: Record<string, unknown>;
  localStorage?: Record<string, unknown>;
}

export function installOverrides(
  page: PageLike,
  emit: Emit,
  opts: OverrideOptions = {}
): void {
  const ctx = makeCtx(emit, opts);

  if (page.navigator) {
    wrapMethod(ctx, page.navigator, "sendBeacon", (args) => [
      "web_api_call",
      { api_name: "sendBeacon", mode: "get", url: String(args[0] ?? "") },
    ]);
    wrapAccessor(ctx, page.navigator, "userAgent", () => [
      "web_api_call",
      { api_name: "userAgent", mode: "get" },
    ]);
  }

  if (page.document) {
    wrapAccessor(ctx, page.document, "cookie", (mode, value) => [
      "storage_access",
      { mechanism: "cookie", mode, key: mode === "set" ? cookieKey(value) : "" },
    ]);
    wrapDomInteraction(ctx, page.document);
  }

  if (page.localStorage) {
    wrapMethod(ctx, page.localStorage, "getItem", (args) => [
      "storage_access",
      { mechanism: "local_storage", mode: "get", key: String(args[0] ?? "") },
    ]);
    wrapMethod(ctx, page.localStorage, "setItem", (args) => [
      "storage_access",
      { mechanism: "local_storage", mode: "set", key: String(args[0] ?? "") },
    ]);
  }
}

function wrapDomInteraction(ctx: Ctx, target: Record<string, unknown>): void {
  for (const [name, mode] of DOM_INTERACTION) {
    wrapMethod(ctx, target, name, () => [
      "web_api_call",
      { api_name: name, mode },
    ]);
  }
}
