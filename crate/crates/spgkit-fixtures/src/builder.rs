//! Emits trace files in the JSONL event format with auto-incremented
//! sequence numbers.

use serde_json::{json, Map, Value};

#[derive(Debug, Default)]
pub struct TraceBuilder {
    lines: Vec<String>,
    seq: u64,
}

impl TraceBuilder {
    pub fn new() -> Self {
        TraceBuilder::default()
    }

    fn push(&mut self, kind: &str, pid: u32, extra: Value) {
        self.seq += 1;
        let mut record = Map::new();
        record.insert("seq".into(), json!(self.seq));
        record.insert("kind".into(), json!(kind));
        record.insert("pid".into(), json!(pid));
        if let Value::Object(fields) = extra {
            for (k, v) in fields {
                if !v.is_null() {
                    record.insert(k, v);
                }
            }
        }
        self.lines.push(serde_json::to_string(&Value::Object(record)).unwrap());
    }

    pub fn process_start(&mut self, pid: u32, image_name: &str, image_path: &str, parent: Option<u32>) {
        self.push(
            "process_start",
            pid,
            json!({"image_name": image_name, "image_path": image_path, "parent_pid": parent}),
        );
    }

    pub fn wave_entry(&mut self, pid: u32, wave: u32, pred: Option<(u32, u32)>) {
        self.push(
            "wave_entry",
            pid,
            json!({
                "wave_index": wave,
                "pred_pid": pred.map(|p| p.0),
                "pred_wave": pred.map(|p| p.1),
            }),
        );
    }

    pub fn api_call(&mut self, pid: u32, wave: u32, name: &str, tainted: bool, target: Option<u32>) {
        self.push(
            "api_call",
            pid,
            json!({
                "api_name": name,
                "wave_index": wave,
                "tainted": tainted,
                "target_pid": target,
            }),
        );
    }

    pub fn cross(&mut self, src: (u32, u32), dst: (u32, u32)) {
        self.push(
            "cross_process_transition",
            src.0,
            json!({
                "src_pid": src.0,
                "src_wave": src.1,
                "dst_pid": dst.0,
                "dst_wave": dst.1,
            }),
        );
    }

    pub fn file_create(&mut self, pid: u32, wave: u32, path: &str) {
        self.push(
            "file_create",
            pid,
            json!({"file_path": path, "wave_index": wave}),
        );
    }

    pub fn instruction_summary(&mut self, pid: u32, wave: u32, count: u64) {
        self.push(
            "instruction_summary",
            pid,
            json!({"wave_index": wave, "unique_instruction_count": count}),
        );
    }

    pub fn build(self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}

/// Deterministic 64-char lowercase hex id.
pub fn sample_id(seed: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(seed.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
