use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{CrewId, PipelineError, Result, Stage, MANIFEST_FILE};

/// Digest algorithm recorded in every manifest header.
pub const DIGEST_ALGORITHM: &str = "sha256";

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A consumed input: another stage's payload or an external source
/// (`@dataset`, `@config`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactInput {
    pub source: String,
    pub digest: String,
}

impl ArtifactInput {
    pub fn stage(stage: Stage, digest: &str) -> Self {
        Self {
            source: stage.name().to_string(),
            digest: digest.to_string(),
        }
    }

    pub fn external(name: &str, digest: String) -> Self {
        Self {
            source: format!("@{name}"),
            digest,
        }
    }

    /// The upstream stage, `None` for external inputs.
    pub fn upstream(&self) -> Option<Stage> {
        Stage::from_name(&self.source)
    }
}

/// The persisted, checksummed output of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageArtifact {
    pub stage: Stage,
    pub schema_tag: String,
    /// Hex digest of the payload bytes.
    pub digest: String,
    /// Payload path relative to the run directory.
    pub path: String,
    pub inputs: Vec<ArtifactInput>,
    /// RFC 3339 timestamp; not covered by any digest.
    pub produced_at: String,
}

/// Ordered artifact records of one run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub crew: CrewId,
    records: Vec<StageArtifact>,
}

impl Manifest {
    pub fn new(crew: CrewId) -> Self {
        Self {
            crew,
            records: Vec::new(),
        }
    }

    pub fn records(&self) -> &[StageArtifact] {
        &self.records
    }

    pub fn get(&self, stage: Stage) -> Option<&StageArtifact> {
        self.records.iter().find(|r| r.stage == stage)
    }

    /// Inserts or replaces the record for `artifact.stage`, keeping stage order.
    pub fn upsert(&mut self, artifact: StageArtifact) {
        self.records.retain(|r| r.stage != artifact.stage);
        let at = self.records.partition_point(|r| r.stage < artifact.stage);
        self.records.insert(at, artifact);
    }

    pub fn remove(&mut self, stage: Stage) {
        self.records.retain(|r| r.stage != stage);
    }

    /// Header lines, then one tab-separated record per line:
    /// `stage schema_tag digest path inputs produced_at`, where `inputs` is
    /// `source=digest` pairs joined by `;` (or `-` when empty).
    pub fn to_text(&self) -> String {
        let mut out = format!("# digest: {DIGEST_ALGORITHM}\n# crew: {}\n", self.crew);
        for r in &self.records {
            let inputs = if r.inputs.is_empty() {
                "-".to_string()
            } else {
                r.inputs
                    .iter()
                    .map(|i| format!("{}={}", i.source, i.digest))
                    .collect::<Vec<_>>()
                    .join(";")
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.stage, r.schema_tag, r.digest, r.path, inputs, r.produced_at
            )
            .unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| PipelineError::Manifest(m);
        let mut crew = None;
        let mut algorithm = None;
        let mut records: Vec<StageArtifact> = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(meta) = line.strip_prefix('#') {
                let (k, v) = meta
                    .split_once(':')
                    .ok_or_else(|| bad(format!("bad header `{line}`")))?;
                match k.trim() {
                    "digest" => algorithm = Some(v.trim().to_string()),
                    "crew" => crew = Some(v.trim().parse::<CrewId>().map_err(bad)?),
                    other => return Err(bad(format!("unknown header `{other}`"))),
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [stage, schema, digest, path, inputs, produced_at] = fields[..] else {
                return Err(bad(format!("expected 6 fields in `{line}`")));
            };
            let stage =
                Stage::from_name(stage).ok_or_else(|| bad(format!("unknown stage `{stage}`")))?;
            if records.last().is_some_and(|r| r.stage >= stage) {
                return Err(bad(format!("stage `{stage}` out of order or repeated")));
            }
            let inputs = if inputs == "-" {
                Vec::new()
            } else {
                inputs
                    .split(';')
                    .map(|p| {
                        p.split_once('=')
                            .map(|(s, d)| ArtifactInput {
                                source: s.to_string(),
                                digest: d.to_string(),
                            })
                            .ok_or_else(|| bad(format!("bad input `{p}`")))
                    })
                    .collect::<Result<_>>()?
            };
            records.push(StageArtifact {
                stage,
                schema_tag: schema.to_string(),
                digest: digest.to_string(),
                path: path.to_string(),
                inputs,
                produced_at: produced_at.to_string(),
            });
        }
        match algorithm.as_deref() {
            Some(DIGEST_ALGORITHM) => {}
            Some(other) => return Err(bad(format!("unsupported digest `{other}`"))),
            None => return Err(bad("missing digest header".into())),
        }
        let crew = crew.ok_or_else(|| bad("missing crew header".into()))?;
        Ok(Self { crew, records })
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(PipelineError::MissingManifest(run_dir.to_path_buf()))
            }
            Err(e) => Err(PipelineError::io(path, e)),
        }
    }

    /// Writes via a temporary file and rename so a crash never leaves a
    /// half-written manifest.
    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let tmp = run_dir.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, self.to_text()).map_err(|e| PipelineError::io(&tmp, e))?;
        let dest = run_dir.join(MANIFEST_FILE);
        fs::rename(&tmp, &dest).map_err(|e| PipelineError::io(dest, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn artifact(stage: Stage, inputs: Vec<ArtifactInput>) -> StageArtifact {
        StageArtifact {
            stage,
            schema_tag: stage.schema_tag(CrewId::B).into(),
            digest: digest_hex(stage.name().as_bytes()),
            path: stage.payload_file(),
            inputs,
            produced_at: "2024-01-01T00:00:00Z".into(),
        }
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            digest_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn round_trip_and_ordering() {
        let mut m = Manifest::new(CrewId::B);
        let loader = artifact(
            Stage::Loader,
            vec![ArtifactInput::external("dataset", "ab".into())],
        );
        let cleaner = artifact(
            Stage::Cleaner,
            vec![ArtifactInput::stage(Stage::Loader, &loader.digest)],
        );
        m.upsert(cleaner.clone());
        m.upsert(loader.clone());
        assert_eq!(m.records()[0].stage, Stage::Loader);
        let text = m.to_text();
        assert!(text.starts_with("# digest: sha256\n# crew: B\n"));
        assert_eq!(Manifest::parse(&text).unwrap(), m);
        assert_eq!(
            m.get(Stage::Cleaner).unwrap().inputs[0].upstream(),
            Some(Stage::Loader)
        );

        let no_inputs = artifact(Stage::Checker, vec![]);
        m.upsert(no_inputs);
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn parse_errors() {
        assert!(Manifest::parse("# crew: A\n").is_err());
        assert!(Manifest::parse("# digest: md5\n# crew: A\n").is_err());
        assert!(Manifest::parse("# digest: sha256\n").is_err());
        let dup = "# digest: sha256\n# crew: A\nloader\tx\td\tp\t-\tt\nloader\tx\td\tp\t-\tt\n";
        assert!(Manifest::parse(dup).is_err());
        assert!(Manifest::parse("# digest: sha256\n# crew: A\nloader\tx\n").is_err());
    }

    #[test]
    fn load_missing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Manifest::load(dir.path()),
            Err(PipelineError::MissingManifest(_))
        ));
        let m = Manifest::new(CrewId::A);
        m.save(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
    }
}
