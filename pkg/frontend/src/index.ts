export * from "./trace.js";
export * from "./stack.js";
export * from "./overrides.js";
export * from "./interceptor.js";
