//! Line-oriented JSON log records on stderr. `OBJFLOW_LOG` sets the level
//! (`off`, `error`, `warn`, `info`, `debug`, `trace`; default `info`).

use std::io::Write;

use log::kv::{Key, Value, VisitSource};
use log::{LevelFilter, Log, Metadata, Record};
use serde_json::{Map, Number};

pub const LOG_ENV: &str = "OBJFLOW_LOG";

struct JsonLogger;

struct Fields(Map<String, serde_json::Value>);

impl<'kvs> VisitSource<'kvs> for Fields {
    fn visit_pair(&mut self, key: Key<'kvs>, value: Value<'kvs>) -> Result<(), log::kv::Error> {
        let v = if let Some(b) = value.to_bool() {
            serde_json::Value::Bool(b)
        } else if let Some(u) = value.to_u64() {
            u.into()
        } else if let Some(i) = value.to_i64() {
            i.into()
        } else if let Some(f) = value.to_f64() {
            Number::from_f64(f).map_or_else(|| f.to_string().into(), serde_json::Value::Number)
        } else {
            value.to_string().into()
        };
        self.0.insert(key.to_string(), v);
        Ok(())
    }
}

/// One JSON object per record: level, stage (the log target), message and
/// any key-value fields.
pub fn format_record(record: &Record) -> String {
    let mut fields = Fields(Map::new());
    let _ = record.key_values().visit(&mut fields);
    let mut obj = Map::new();
    obj.insert("level".into(), record.level().as_str().to_ascii_lowercase().into());
    obj.insert("stage".into(), record.target().into());
    obj.insert("message".into(), record.args().to_string().into());
    if !fields.0.is_empty() {
        obj.insert("fields".into(), serde_json::Value::Object(fields.0));
    }
    serde_json::Value::Object(obj).to_string()
}

impl Log for JsonLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= log::max_level()
    }

    fn log(&self, record: &Record) {
        if self.enabled(record.metadata()) {
            let _ = writeln!(std::io::stderr().lock(), "{}", format_record(record));
        }
    }

    fn flush(&self) {
        let _ = std::io::stderr().flush();
    }
}

pub fn level_from_env(value: Option<&str>) -> LevelFilter {
    value.and_then(|v| v.trim().parse().ok()).unwrap_or(LevelFilter::Info)
}

/// Installs the logger; later calls are no-ops.
pub fn init() {
    static LOGGER: JsonLogger = JsonLogger;
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(level_from_env(std::env::var(LOG_ENV).ok().as_deref()));
    }
}
