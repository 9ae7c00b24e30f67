// Shapes of the edge node's HTTP API. The dashboard holds no state of
// its own authority: everything below is reconstructable from these
// responses alone.

export type Urgency = "low" | "medium" | "high";

export interface Alert {
  alert_id: string;
  obs_id: string;
  sensor_id: string;
  location: { lat: number; lon: number };
  class_id: number;
  class_name: string;
  confidence: number;
  recommendation: string;
  urgency: Urgency;
  created_ms: number;
  acked: boolean;
  image_ref: string;
}

export interface SensorReading {
  ph: number;
  temperature_c: number;
  humidity_pct: number;
  light_klux: number;
  timestamp_ms: number;
  sensor_id: string;
}

export interface PatchImage {
  width: number;
  height: number;
  pixels: number[]; // row-major grayscale in [0,1]
}

export interface Observation {
  obs_id: string;
  image: PatchImage;
  sensors: SensorReading;
  location: { lat: number; lon: number };
  label: number | null;
}

export interface Diagnosis {
  obs_id: string;
  probs: number[];
  predicted: number;
  confidence: number;
  recommendation: string;
  model_version: string;
}

export interface ObservationDetail {
  observation: Observation;
  diagnosis: Diagnosis;
}

export type CommandState = "pending" | "approved" | "rejected" | "executed";

export interface CommandRecord {
  command_id: string;
  action: string;
  target_sensor_id: string;
  requires_approval: boolean;
  obs_id: string;
  created_ms: number;
  state: CommandState;
  decided_ms: number | null;
}

export interface StatusSnapshot {
  edge_id: string;
  model_version: string | null;
  model_stage: string | null;
  queue_depth: number;
  buffered_records: number;
  acked_records: number;
  alerts_total: number;
  pending_commands: number;
  session_id: string | null;
  last_sync_ms: number;
}

export interface QueryResponse {
  obs_id: string;
  prompt_text: string;
  question: string;
  answer: string;
  diagnosis: Diagnosis;
  class_name: string;
}
