// Surrogate interception. One interface covers both extension generations:
// MV2 substitutes the response body in place, MV3 redirects the request to
// a bundled surrogate resource. Any manifest problem means pass-through.

export interface ReplacementRule {
  pattern: string;
  surrogate_path: string;
}

export interface SurrogateManifest {
  rules: ReplacementRule[];
}

export type Mode = "mv2" | "mv3";

export interface PausedRequest {
  message: string;
  url: string;
  responseCode: number;
}

export type ResponseAction =
  | { action: "continue" }
  | { action: "fulfill"; body: string }
  | { action: "redirect"; redirectUrl: string };

export const CONTINUE: ResponseAction = { action: "continue" };

function hostname(url: string): string | null {
  const match = /^[a-z][a-z0-9+.\-]*:\/\/([^/?#]*)/i.exec(url);
  if (!match) {
    return null;
  }
  return match[1].split("@").pop()!.split(":")[0].toLowerCase();
}

function globToRegExp(glob: string): RegExp {
  const escaped = glob.replace(/[.*+?^${}()|[\]\\]/g, (ch) =>
    ch === "*" ? ".*" : "\\" + ch
  );
  return new RegExp("^" + escaped + "$");
}

// pattern is "host/path-glob"; the host part matches itself and subdomains
export function ruleMatches(rule: ReplacementRule, url: string): boolean {
  const slash = rule.pattern.indexOf("/");
  if (slash < 0) {
    return false;
  }
  const ruleHost = rule.pattern.slice(0, slash).toLowerCase();
  const pathGlob = rule.pattern.slice(slash);
  const host = hostname(url);
  if (host === null) {
    return false;
  }
  if (host !== ruleHost && !host.endsWith("." + ruleHost)) {
    return false;
  }
  const pathStart = url.indexOf("/", url.indexOf("://") + 3);
  const path = pathStart < 0 ? "/" : url.slice(pathStart).split(/[?#]/)[0];
  return globToRegExp(pathGlob).test(path);
}

export class Interceptor {
  private rules: ReplacementRule[] = [];
  private surrogates: Map<string, string> = new Map();
  readonly mode: Mode;
  readonly loadError: boolean;

  constructor(
    manifestText: string,
    surrogateBodies: Record<string, string>,
    mode: Mode = "mv2",
    private surrogateBaseUrl = "extension://surrogates/"
  ) {
    this.mode = mode;
    let failed = false;
    try {
      const manifest = JSON.parse(manifestText) as SurrogateManifest;
      if (!Array.isArray(manifest.rules)) {
        throw new TypeError("manifest.rules must be an array");
      }
      for (const rule of manifest.rules) {
        if (typeof rule.pattern !== "string" || typeof rule.surrogate_path !== "string") {
          throw new TypeError("bad rule entry");
        }
        this.rules.push({ pattern: rule.pattern, surrogate_path: rule.surrogate_path });
      }
      for (const [path, body] of Object.entries(surrogateBodies)) {
        this.surrogates.set(path, body);
      }
    } catch {
      // fail open: behave as if no rules were loaded
      this.rules = [];
      this.surrogates.clear();
      failed = true;
    }
    this.loadError = failed;
  }

  onRequestPaused(event: PausedRequest): ResponseAction {
    if (event.message !== "Fetch.requestPaused") {
      return CONTINUE;
    }
    if (event.responseCode !== 200) {
      return CONTINUE;
    }
    for (const rule of this.rules) {
      if (!ruleMatches(rule, event.url)) {
        continue;
      }
      const body = this.surrogates.get(rule.surrogate_path);
      if (body === undefined) {
        continue;
      }
      if (this.mode === "mv3") {
        return { action: "redirect", redirectUrl: this.surrogateBaseUrl + rule.surrogate_path };
      }
      return { action: "fulfill", body };
    }
    return CONTINUE;
  }
}

// resolve an action against the network body, as the extension runtime would
export function resolveBody(action: ResponseAction, networkBody: string): string {
  return action.action === "fulfill" ? action.body : networkBody;
}
