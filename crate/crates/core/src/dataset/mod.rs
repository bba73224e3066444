//! Procedural houses, expert samples, the rectification pass and the dataset
//! variants built on top of it.
//!
//! A dataset file is JSON lines. Each line is one record tagged by `kind`:
//!
//! * `header` – `{"kind":"header","variant":"v1","env":{..}}`, first line
//! * `house` – `{"kind":"house","id":"h0003","split":"train","seed":..,"map":{..}}`
//! * `sample` – `{"kind":"sample","id":..,"map_ref":..,"question":{..},"answer":..,
//!   "start":{..},"expert":[..],"terminal_pose":{..}}`
//!
//! An empty file is an empty dataset.

mod generate;
mod rectify;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_house, generate_samples, house_seed, GenParams, SampleBatch};
pub use rectify::{
    backtrack_start, plus_variant, rectify_dataset, rectify_sample, reverse_variant,
    sees_properly, turns_between, RectifyCounts, RectifyOutcome, ViewBand,
};

use crate::gridworld::{
    Action, AgentPose, FovParams, GridMap, Object, TerminalSpec, DEFAULT_TERMINAL_RADIUS,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("infeasible generation parameters: {0}")]
    Infeasible(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sample {sample} references unknown house {map_ref}")]
    MissingHouse { sample: String, map_ref: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Environment settings shared by every sample of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvParams {
    pub fov: FovParams,
    pub terminal_radius: f64,
    pub view: ViewBand,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            fov: FovParams::default(),
            terminal_radius: DEFAULT_TERMINAL_RADIUS,
            view: ViewBand::default(),
        }
    }
}

impl EnvParams {
    pub fn terminal(&self, target: (i32, i32)) -> TerminalSpec {
        TerminalSpec {
            target,
            max_dist: self.terminal_radius,
            fov: self.fov,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    RoomOf,
    ColorOf,
}

impl QuestionType {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub qtype: QuestionType,
    pub target_object_id: u32,
    /// Class of the target, cached so the question can be embedded without
    /// the map.
    pub target_class: u32,
    pub text: String,
}

impl QuestionSpec {
    pub fn new(qtype: QuestionType, target: &Object) -> QuestionSpec {
        let text = match qtype {
            QuestionType::RoomOf => format!("what room is the object-{} located in?", target.class),
            QuestionType::ColorOf => format!("what color is the object-{}?", target.class),
        };
        QuestionSpec {
            qtype,
            target_object_id: target.id,
            target_class: target.class,
            text,
        }
    }

    pub fn target_cell(&self, map: &GridMap) -> Option<(i32, i32)> {
        map.object(self.target_object_id).map(|o| (o.x, o.y))
    }

    /// Ground-truth answer: a room type or a color index.
    pub fn answer(&self, map: &GridMap) -> Option<u32> {
        let o = map.object(self.target_object_id)?;
        match self.qtype {
            QuestionType::RoomOf => map.room_at(o.x, o.y).and_then(|r| map.room_type(r)),
            QuestionType::ColorOf => Some(o.color),
        }
    }

    /// Number of possible answers for this question type.
    pub fn answer_space(&self, map: &GridMap) -> u32 {
        match self.qtype {
            QuestionType::RoomOf => map.vocab.room_types,
            QuestionType::ColorOf => map.vocab.colors,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub map_ref: String,
    pub question: QuestionSpec,
    pub answer: u32,
    pub start: AgentPose,
    pub expert: Vec<Action>,
    pub terminal_pose: AgentPose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Variant {
    #[default]
    #[serde(rename = "v1")]
    V1,
    #[serde(rename = "v1--")]
    Rectified,
    #[serde(rename = "v1--R")]
    Reversed,
    #[serde(rename = "v1+")]
    Plus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct House {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub map: GridMap,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub variant: Variant,
    pub env: EnvParams,
    pub houses: Vec<House>,
    pub samples: Vec<Sample>,
}

pub fn house_id(index: usize) -> String {
    format!("h{index:04}")
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Header { variant: Variant, env: EnvParams },
    House(House),
    Sample(Sample),
}

/// Counts reported by [`generate_dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GenSummary {
    pub houses: usize,
    pub train_houses: usize,
    pub test_houses: usize,
    pub samples: usize,
    pub dropped: usize,
}

/// Generate every house and its samples. Houses are produced in parallel and
/// merged in index order; the last `test_fraction` of houses form the test
/// split.
pub fn generate_dataset(params: &GenParams) -> Result<(Dataset, GenSummary), DatasetError> {
    let outputs = generate::generate_houses(params)?;
    let n_test = (params.houses as f64 * params.test_fraction).round() as usize;
    let first_test = params.houses - n_test.min(params.houses);
    let mut dataset = Dataset {
        variant: Variant::V1,
        env: params.env,
        ..Dataset::default()
    };
    let mut dropped = 0;
    for (i, out) in outputs.into_iter().enumerate() {
        dataset.houses.push(House {
            id: house_id(i),
            split: if i >= first_test { Split::Test } else { Split::Train },
            seed: house_seed(params.seed, i),
            map: out.map,
        });
        dropped += out.batch.dropped;
        dataset.samples.extend(out.batch.samples);
    }
    let summary = GenSummary {
        houses: params.houses,
        train_houses: first_test,
        test_houses: params.houses - first_test,
        samples: dataset.samples.len(),
        dropped,
    };
    Ok((dataset, summary))
}

impl Dataset {
    pub fn house(&self, id: &str) -> Option<&House> {
        self.houses.iter().find(|h| h.id == id)
    }

    pub fn map(&self, id: &str) -> Option<&GridMap> {
        self.house(id).map(|h| &h.map)
    }

    pub fn map_for(&self, sample: &Sample) -> Result<&GridMap, DatasetError> {
        self.map(&sample.map_ref).ok_or_else(|| DatasetError::MissingHouse {
            sample: sample.id.clone(),
            map_ref: sample.map_ref.clone(),
        })
    }

    pub fn split_of(&self, sample: &Sample) -> Option<Split> {
        self.house(&sample.map_ref).map(|h| h.split)
    }

    /// The houses of one split and the samples placed in them.
    pub fn split(&self, split: Split) -> Dataset {
        let houses: Vec<House> = self
            .houses
            .iter()
            .filter(|h| h.split == split)
            .cloned()
            .collect();
        let samples = self
            .samples
            .iter()
            .filter(|s| houses.iter().any(|h| h.id == s.map_ref))
            .cloned()
            .collect();
        Dataset {
            variant: self.variant,
            env: self.env,
            houses,
            samples,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn terminal_for(&self, sample: &Sample) -> Result<TerminalSpec, DatasetError> {
        let map = self.map_for(sample)?;
        let target = sample
            .question
            .target_cell(map)
            .ok_or_else(|| DatasetError::MissingHouse {
                sample: sample.id.clone(),
                map_ref: format!("{} (target object missing)", sample.map_ref),
            })?;
        Ok(self.env.terminal(target))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: &Record| {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        };
        push(&Record::Header {
            variant: self.variant,
            env: self.env,
        });
        for h in &self.houses {
            push(&Record::House(h.clone()));
        }
        for s in &self.samples {
            push(&Record::Sample(s.clone()));
        }
        out
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Dataset, DatasetError> {
        let mut dataset = Dataset::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            match record {
                Record::Header { variant, env } => {
                    dataset.variant = variant;
                    dataset.env = env;
                }
                Record::House(h) => {
                    h.map.validate().map_err(|e| DatasetError::Parse {
                        line: lineno,
                        message: e.to_string(),
                    })?;
                    dataset.houses.push(h);
                }
                Record::Sample(s) => {
                    if dataset.house(&s.map_ref).is_none() {
                        return Err(DatasetError::Parse {
                            line: lineno,
                            message: format!("unknown house {}", s.map_ref),
                        });
                    }
                    dataset.samples.push(s);
                }
            }
        }
        Ok(dataset)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let mut file = fs::File::create(path)?;
        file.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
        let file = fs::File::open(path)?;
        Dataset::from_reader(BufReader::new(file))
    }
}
