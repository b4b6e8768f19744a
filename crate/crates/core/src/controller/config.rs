//! Campaign configuration: the TOML schema and its validation.
//!
//! A config file holds an array of tables, one per campaign:
//!
//! ```toml
//! [[campaign]]
//! campaign_id = "ca-strict"
//! fuzzer = { builtin = "constraint_aware" }
//! subject = "strict"
//! duration = 60
//! validator_port = 9000
//! oracle = { mod_len = 256 }
//! log_path = "ca-strict.jsonl"
//! rng_seed = 42
//! ```
//!
//! The `fuzzer` table names either a builtin strategy or an external
//! executable. The builtin `mutation` strategy accepts its tuning knobs and
//! an inline seed corpus (`seeds`, hex strings) next to the strategy name;
//! external fuzzers take an `args` template where `{port}`, `{seed_dir}`,
//! and `{out_dir}` are substituted at launch.

use super::ControllerError;
use crate::generators::{GeneratorStrategy, MutationConfig};
use crate::pkcs1::OracleParams;
use crate::subjects::SubjectPolicy;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Environment variable that anchors relative `log_path` values.
pub const LOG_DIR_ENV: &str = "FUZZEVAL_LOG_DIR";

/// Input source for a campaign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FuzzerConfig {
    /// One of the reference generators, driven in-process.
    Builtin {
        strategy: GeneratorStrategy,
        mutation: MutationConfig,
        /// Seed corpus given inline as hex, fed to `mutation` ahead of any
        /// `seed_dir` files.
        inline_seeds: Vec<Vec<u8>>,
    },
    /// External fuzzer process, spawned for the campaign duration.
    External { program: PathBuf, args: Vec<String> },
}

/// One fully validated campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub campaign_id: String,
    pub fuzzer: FuzzerConfig,
    pub subject: SubjectPolicy,
    /// Wall-clock budget. Ignored by builtin fuzzers when `max_inputs` is
    /// set, which trades the time bound for a deterministic count bound.
    pub duration: Duration,
    pub max_inputs: Option<u64>,
    pub seed_dir: Option<PathBuf>,
    /// `0` lets the OS pick a free port.
    pub validator_port: u16,
    pub oracle: OracleParams,
    /// Relative paths resolve against [`LOG_DIR_ENV`] when set.
    pub log_path: PathBuf,
    pub rng_seed: u64,
    /// Signing key for the mock subject; built-in keys cover the bundled
    /// 256-byte and 12-byte moduli.
    pub key_path: Option<PathBuf>,
}

impl CampaignConfig {
    /// The log path the campaign will actually write.
    pub fn resolved_log_path(&self) -> PathBuf {
        if self.log_path.is_absolute() {
            return self.log_path.clone();
        }
        match std::env::var_os(LOG_DIR_ENV) {
            Some(dir) => PathBuf::from(dir).join(&self.log_path),
            None => self.log_path.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default, rename = "campaign")]
    campaigns: Vec<CampaignTable>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignTable {
    campaign_id: String,
    fuzzer: FuzzerTable,
    subject: String,
    duration: f64,
    max_inputs: Option<u64>,
    seed_dir: Option<PathBuf>,
    validator_port: u16,
    oracle: OracleParams,
    log_path: PathBuf,
    rng_seed: u64,
    crash_trigger: Option<u8>,
    key_path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FuzzerTable {
    builtin: Option<GeneratorStrategy>,
    external: Option<PathBuf>,
    #[serde(default)]
    args: Vec<String>,
    havoc_stacking_max: Option<usize>,
    skip_deterministic: Option<bool>,
    #[serde(default)]
    seeds: Vec<String>,
}

fn invalid(id: &str, field: &'static str, msg: impl Into<String>) -> ControllerError {
    ControllerError::InvalidField {
        campaign_id: id.to_string(),
        field,
        msg: msg.into(),
    }
}

impl CampaignTable {
    fn into_config(self) -> Result<CampaignConfig, ControllerError> {
        let id = &self.campaign_id;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid(id, "duration", "must be a positive number of seconds"));
        }

        let fuzzer = match (self.fuzzer.builtin, self.fuzzer.external) {
            (Some(strategy), None) => {
                let mutation = MutationConfig {
                    havoc_stacking_max: self
                        .fuzzer
                        .havoc_stacking_max
                        .unwrap_or(MutationConfig::default().havoc_stacking_max),
                    skip_deterministic: self.fuzzer.skip_deterministic.unwrap_or(false),
                };
                if mutation.havoc_stacking_max == 0 {
                    return Err(invalid(id, "fuzzer.havoc_stacking_max", "must be at least 1"));
                }
                let mut inline_seeds = Vec::with_capacity(self.fuzzer.seeds.len());
                for (i, s) in self.fuzzer.seeds.iter().enumerate() {
                    let bytes = hex::decode(s).map_err(|e| {
                        invalid(id, "fuzzer.seeds", format!("entry {i} is not hex: {e}"))
                    })?;
                    inline_seeds.push(bytes);
                }
                if strategy == GeneratorStrategy::Mutation
                    && inline_seeds.is_empty()
                    && self.seed_dir.is_none()
                {
                    return Err(invalid(
                        id,
                        "seed_dir",
                        "the mutation strategy needs seed_dir or inline fuzzer.seeds",
                    ));
                }
                FuzzerConfig::Builtin {
                    strategy,
                    mutation,
                    inline_seeds,
                }
            }
            (None, Some(program)) => {
                if self.fuzzer.havoc_stacking_max.is_some()
                    || self.fuzzer.skip_deterministic.is_some()
                    || !self.fuzzer.seeds.is_empty()
                {
                    return Err(invalid(
                        id,
                        "fuzzer",
                        "builtin tuning keys do not apply to an external fuzzer",
                    ));
                }
                if self.max_inputs.is_some() {
                    return Err(invalid(
                        id,
                        "max_inputs",
                        "count bounds only apply to builtin fuzzers",
                    ));
                }
                FuzzerConfig::External {
                    program,
                    args: self.fuzzer.args,
                }
            }
            (Some(_), Some(_)) | (None, None) => {
                return Err(invalid(
                    id,
                    "fuzzer",
                    "set exactly one of `builtin` or `external`",
                ));
            }
        };

        let trigger = self.crash_trigger.unwrap_or(SubjectPolicy::DEFAULT_TRIGGER);
        let subject = SubjectPolicy::from_name(&self.subject, trigger).ok_or_else(|| {
            invalid(
                id,
                "subject",
                format!(
                    "unknown policy {:?}; expected strict, lenient_ps, or crashy",
                    self.subject
                ),
            )
        })?;

        Ok(CampaignConfig {
            campaign_id: self.campaign_id,
            fuzzer,
            subject,
            duration: Duration::from_secs_f64(self.duration),
            max_inputs: self.max_inputs,
            seed_dir: self.seed_dir,
            validator_port: self.validator_port,
            oracle: self.oracle,
            log_path: self.log_path,
            rng_seed: self.rng_seed,
            key_path: self.key_path,
        })
    }
}

/// Parse and validate a config file.
pub fn load_config(path: &Path) -> Result<Vec<CampaignConfig>, ControllerError> {
    let text = std::fs::read_to_string(path).map_err(|source| ControllerError::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Parse and validate config text.
pub fn parse_config(text: &str) -> Result<Vec<CampaignConfig>, ControllerError> {
    let file: ConfigFile = toml::from_str(text)?;
    let mut configs = Vec::with_capacity(file.campaigns.len());
    let mut seen = std::collections::HashSet::new();
    for table in file.campaigns {
        if !seen.insert(table.campaign_id.clone()) {
            return Err(ControllerError::DuplicateCampaignId(table.campaign_id));
        }
        configs.push(table.into_config()?);
    }
    Ok(configs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[campaign]]
        campaign_id = "ca-strict"
        fuzzer = { builtin = "constraint_aware" }
        subject = "strict"
        duration = 60
        validator_port = 9000
        oracle = { mod_len = 256 }
        log_path = "ca-strict.jsonl"
        rng_seed = 42
    "#;

    #[test]
    fn minimal_campaign_parses() {
        let configs = parse_config(MINIMAL).unwrap();
        assert_eq!(configs.len(), 1);
        let c = &configs[0];
        assert_eq!(c.campaign_id, "ca-strict");
        assert_eq!(
            c.fuzzer,
            FuzzerConfig::Builtin {
                strategy: GeneratorStrategy::ConstraintAware,
                mutation: MutationConfig::default(),
                inline_seeds: vec![],
            }
        );
        assert_eq!(c.subject, SubjectPolicy::Strict);
        assert_eq!(c.duration, Duration::from_secs(60));
        assert_eq!(c.validator_port, 9000);
        assert_eq!(c.oracle, OracleParams::new(256).unwrap());
        assert_eq!(c.log_path, PathBuf::from("ca-strict.jsonl"));
        assert_eq!(c.rng_seed, 42);
        assert_eq!(c.max_inputs, None);
    }

    #[test]
    fn two_campaigns_parse_in_order() {
        let text = format!(
            "{MINIMAL}\n{}",
            MINIMAL
                .replace("ca-strict", "second")
                .replace("9000", "9001")
        );
        let configs = parse_config(&text).unwrap();
        assert_eq!(configs.len(), 2);
        assert_eq!(configs[0].campaign_id, "ca-strict");
        assert_eq!(configs[1].campaign_id, "second");
    }

    #[test]
    fn zero_duration_names_the_field() {
        let text = MINIMAL.replace("duration = 60", "duration = 0");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("duration"), "{err}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = format!("{MINIMAL}\n{}", MINIMAL.replace("9000", "9001"));
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, ControllerError::DuplicateCampaignId(id) if id == "ca-strict"));
    }

    #[test]
    fn mutation_without_seeds_is_rejected() {
        let text = MINIMAL.replace("constraint_aware", "mutation");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("seed_dir"), "{err}");
    }

    #[test]
    fn mutation_accepts_inline_seeds_and_tuning() {
        let text = MINIMAL.replace(
            r#"fuzzer = { builtin = "constraint_aware" }"#,
            r#"fuzzer = { builtin = "mutation", seeds = ["00ff"], havoc_stacking_max = 4, skip_deterministic = true }"#,
        );
        let configs = parse_config(&text).unwrap();
        assert_eq!(
            configs[0].fuzzer,
            FuzzerConfig::Builtin {
                strategy: GeneratorStrategy::Mutation,
                mutation: MutationConfig {
                    havoc_stacking_max: 4,
                    skip_deterministic: true,
                },
                inline_seeds: vec![vec![0x00, 0xFF]],
            }
        );
    }

    #[test]
    fn bad_inline_seed_hex_is_rejected() {
        let text = MINIMAL.replace(
            r#"fuzzer = { builtin = "constraint_aware" }"#,
            r#"fuzzer = { builtin = "mutation", seeds = ["xyz"] }"#,
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("fuzzer.seeds"), "{err}");
    }

    #[test]
    fn external_fuzzer_parses() {
        let text = MINIMAL.replace(
            r#"fuzzer = { builtin = "constraint_aware" }"#,
            r#"fuzzer = { external = "/opt/fuzz/run", args = ["--port", "{port}"] }"#,
        );
        let configs = parse_config(&text).unwrap();
        assert_eq!(
            configs[0].fuzzer,
            FuzzerConfig::External {
                program: PathBuf::from("/opt/fuzz/run"),
                args: vec!["--port".into(), "{port}".into()],
            }
        );
    }

    #[test]
    fn external_with_max_inputs_is_rejected() {
        let text = MINIMAL
            .replace(
                r#"fuzzer = { builtin = "constraint_aware" }"#,
                r#"fuzzer = { external = "/opt/fuzz/run" }
                   max_inputs = 10"#,
            );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("max_inputs"), "{err}");
    }

    #[test]
    fn fuzzer_must_pick_one_kind() {
        let text = MINIMAL.replace(
            r#"fuzzer = { builtin = "constraint_aware" }"#,
            r#"fuzzer = { builtin = "constraint_aware", external = "/x" }"#,
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("exactly one"), "{err}");
        let text = MINIMAL.replace(
            r#"fuzzer = { builtin = "constraint_aware" }"#,
            "fuzzer = { }",
        );
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn unknown_subject_is_rejected() {
        let text = MINIMAL.replace(r#"subject = "strict""#, r#"subject = "mystery""#);
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("subject"), "{err}");
    }

    #[test]
    fn crash_trigger_configures_the_crashy_policy() {
        let text = MINIMAL.replace(
            r#"subject = "strict""#,
            "subject = \"crashy\"\ncrash_trigger = 0x7e",
        );
        let configs = parse_config(&text).unwrap();
        assert_eq!(configs[0].subject, SubjectPolicy::Crashy { trigger: 0x7E });

        let text = MINIMAL.replace(r#"subject = "strict""#, r#"subject = "crashy""#);
        let configs = parse_config(&text).unwrap();
        assert_eq!(
            configs[0].subject,
            SubjectPolicy::Crashy {
                trigger: SubjectPolicy::DEFAULT_TRIGGER
            }
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("rng_seed = 42", "rng_seed = 42\nbudget = 9");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn oracle_invariants_apply_in_config() {
        let text = MINIMAL.replace("{ mod_len = 256 }", "{ mod_len = 4 }");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn empty_file_is_zero_campaigns() {
        assert_eq!(parse_config("").unwrap().len(), 0);
    }
}
