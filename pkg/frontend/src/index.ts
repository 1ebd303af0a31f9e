export { ApiError, FallbackClient, IwpClient } from "./api.js";
export { NotifyStream } from "./stream.js";
export { AvatarOverlay } from "./avatar/overlay.js";
export { ConsoleApp } from "./console/app.js";
export { renderIncidentCard, renderLivenessCard } from "./console/incidents.js";
export {
  ALL_MECHANISMS,
  BACKEND_L2_CLASSES,
  OptionEditor,
  PARENTAL_L2_CLASSES,
  backendOption,
  cybersafetyOption,
  parentalOption,
} from "./console/optionEditor.js";
export * from "./types.js";
