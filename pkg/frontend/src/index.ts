export {
  DetectorHandle,
  openDetector,
  type CalibratorName,
  type Construction,
  type DetectorConfig,
  type FinalResult,
  type OgVariant,
  type StepResult,
  type VerdictStatus,
} from "./detector.js";
export {
  detectStreamFile,
  readPivotalStream,
  type FileDetectionResult,
  type PivotalRecord,
} from "./streamFile.js";
