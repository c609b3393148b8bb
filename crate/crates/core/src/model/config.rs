use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    other => Err(invalid(format!(
                        concat!("unknown ", stringify!($name), " `{}`, expected one of: ", $($text, " "),+),
                        other
                    ))),
                }
            }
        }
    };
}

keyword_enum!(
    /// Nonlinearity after each layer's output; `Relu` gives the -r variant.
    Activation { None => "none", Relu => "relu" }
);
keyword_enum!(
    /// Gate carrier: all-ones (`V1`) or the Fiedler vector (`V2`).
    Variant { V1 => "v1", V2 => "v2" }
);
keyword_enum!(
    LocalKind { Gat => "gat", Gcn => "gcn" }
);
keyword_enum!(
    /// Sequential local-then-global stack, or parallel local-and-global layers.
    Scheme { LocalToGlobal => "local-to-global", LocalAndGlobal => "local-and-global" }
);
keyword_enum!(
    Stage { Warmup => "warmup", Full => "full" }
);

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub local_layers: usize,
    pub global_layers: usize,
    pub heads: usize,
    pub num_classes: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub variant: Variant,
    pub local_kind: LocalKind,
    pub scheme: Scheme,
}

impl ModelConfig {
    pub const REQUIRED_KEYS: [&'static str; 6] =
        ["input_dim", "hidden_dim", "local_layers", "global_layers", "heads", "num_classes"];
    pub const OPTIONAL_KEYS: [&'static str; 5] = ["dropout", "activation", "variant", "local_kind", "scheme"];

    /// Defaults for everything but the sizes.
    pub fn new(input_dim: usize, hidden_dim: usize, local_layers: usize, global_layers: usize, heads: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            local_layers,
            global_layers,
            heads,
            num_classes,
            dropout: 0.0,
            activation: Activation::None,
            variant: Variant::V1,
            local_kind: LocalKind::Gat,
            scheme: Scheme::LocalToGlobal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(invalid("input_dim and hidden_dim must be positive"));
        }
        if self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return Err(invalid(format!(
                "hidden_dim {} is not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if self.local_layers == 0 {
            return Err(invalid("local_layers must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(invalid(format!("num_classes must be at least 2, got {}", self.num_classes)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("input_dim", self.input_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("local_layers", self.local_layers.to_string()),
            ("global_layers", self.global_layers.to_string()),
            ("heads", self.heads.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("dropout", format!("{:?}", self.dropout)),
            ("activation", self.activation.to_string()),
            ("variant", self.variant.to_string()),
            ("local_kind", self.local_kind.to_string()),
            ("scheme", self.scheme.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Builds and validates a config from key=value pairs. Unknown keys and
    /// missing required keys are errors.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map
            .keys()
            .find(|k| !Self::REQUIRED_KEYS.contains(&k.as_str()) && !Self::OPTIONAL_KEYS.contains(&k.as_str()))
        {
            return Err(invalid(format!("unknown model key `{k}`")));
        }
        let size = |key: &str| -> Result<usize> {
            let v = map.get(key).ok_or_else(|| invalid(format!("missing required key `{key}`")))?;
            v.parse().map_err(|_| invalid(format!("`{key}` must be a non-negative integer, got `{v}`")))
        };
        let mut cfg = Self::new(
            size("input_dim")?,
            size("hidden_dim")?,
            size("local_layers")?,
            size("global_layers")?,
            size("heads")?,
            size("num_classes")?,
        );
        if let Some(v) = map.get("dropout") {
            cfg.dropout = v.parse().map_err(|_| invalid(format!("`dropout` must be a real, got `{v}`")))?;
        }
        if let Some(v) = map.get("activation") {
            cfg.activation = v.parse()?;
        }
        if let Some(v) = map.get("variant") {
            cfg.variant = v.parse()?;
        }
        if let Some(v) = map.get("local_kind") {
            cfg.local_kind = v.parse()?;
        }
        if let Some(v) = map.get("scheme") {
            cfg.scheme = v.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses flat `key=value` lines. Blank lines and `#` comments are skipped;
/// repeated keys are rejected.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected key=value, got `{line}`"),
        })?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("duplicate key `{k}`"),
            });
        }
    }
    Ok(map)
}

pub fn format_key_values(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_round_trip() {
        let mut cfg = ModelConfig::new(16, 64, 2, 1, 8, 4);
        cfg.variant = Variant::V2;
        cfg.dropout = 0.25;
        cfg.scheme = Scheme::LocalAndGlobal;
        let text = format_key_values(&cfg.to_map());
        let back = ModelConfig::from_map(&parse_key_values(&text).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_and_unknown_keys() {
        let mut map = ModelConfig::new(4, 8, 1, 1, 2, 2).to_map();
        map.remove("hidden_dim");
        let err = ModelConfig::from_map(&map).unwrap_err().to_string();
        assert!(err.contains("hidden_dim"), "{err}");
        let mut map = ModelConfig::new(4, 8, 1, 1, 2, 2).to_map();
        map.insert("colour".into(), "red".into());
        assert!(ModelConfig::from_map(&map).is_err());
    }

    #[test]
    fn rejects_indivisible_width() {
        assert!(ModelConfig::new(4, 10, 1, 1, 4, 2).validate().is_err());
    }
}
