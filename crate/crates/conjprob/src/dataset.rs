//! Built-in conjunction test corpus: 22 two-object cases given as Keplerian
//! elements at the nominal time of closest approach, together with the
//! tabulated miss distance and relative speed at that encounter.
//!
//! The corpus is embedded in the binary; [`parse_csv`] and [`to_csv`] expose
//! the same schema for external files.

use std::sync::LazyLock;

use crate::dynamics::KeplerElements;
use crate::error::{Error, Result};

/// One conjunction case: both objects at the encounter epoch plus the
/// tabulated encounter geometry used for verification.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConjunctionCase {
    pub id: u32,
    pub object_a: KeplerElements,
    pub object_b: KeplerElements,
    /// Tabulated miss distance at closest approach, m.
    pub miss_distance_m: f64,
    /// Tabulated relative speed at closest approach, m/s.
    pub rel_speed_mps: f64,
}

/// CSV header of the corpus schema.
pub const CSV_HEADER: &str = "id,aA,eA,iA,raanA,argpA,EA,aB,eB,iB,raanB,argpB,EB,dr_m,dv_mps";

const EMBEDDED_CSV: &str = include_str!("data/conjunctions.csv");

static CASES: LazyLock<Vec<ConjunctionCase>> =
    LazyLock::new(|| parse_csv(EMBEDDED_CSV).expect("embedded corpus is well-formed"));

/// All built-in cases, ordered by id (1 through 22).
pub fn builtin_cases() -> &'static [ConjunctionCase] {
    &CASES
}

/// Looks up a built-in case by id.
pub fn case(id: u32) -> Result<&'static ConjunctionCase> {
    builtin_cases()
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::InvalidArgument(format!("no built-in case with id {id}")))
}

/// Parses corpus CSV text. The first line must be the schema header;
/// subsequent non-empty lines are cases.
pub fn parse_csv(text: &str) -> Result<Vec<ConjunctionCase>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::DatasetParse {
                line: 1,
                message: format!(
                    "expected header `{CSV_HEADER}`, got `{}`",
                    other.map(|(_, h)| h).unwrap_or("")
                ),
            })
        }
    }
    let mut cases = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(Error::DatasetParse {
                line: lineno,
                message: format!("expected 15 fields, got {}", fields.len()),
            });
        }
        let id: u32 = fields[0].parse().map_err(|e| Error::DatasetParse {
            line: lineno,
            message: format!("bad id `{}`: {e}", fields[0]),
        })?;
        let mut nums = [0.0f64; 14];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field.parse().map_err(|e| Error::DatasetParse {
                line: lineno,
                message: format!("bad number `{field}`: {e}"),
            })?;
        }
        let el = |o: usize| KeplerElements {
            a: nums[o],
            e: nums[o + 1],
            i: nums[o + 2],
            raan: nums[o + 3],
            argp: nums[o + 4],
            ecc_anom: nums[o + 5],
        };
        cases.push(ConjunctionCase {
            id,
            object_a: el(0),
            object_b: el(6),
            miss_distance_m: nums[12],
            rel_speed_mps: nums[13],
        });
    }
    Ok(cases)
}

/// Serializes cases to corpus CSV, shortest round-trip float formatting.
pub fn to_csv(cases: &[ConjunctionCase]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in cases {
        let a = &c.object_a;
        let b = &c.object_b;
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            c.id,
            a.a,
            a.e,
            a.i,
            a.raan,
            a.argp,
            a.ecc_anom,
            b.a,
            b.e,
            b.i,
            b.raan,
            b.argp,
            b.ecc_anom,
            c.miss_distance_m,
            c.rel_speed_mps,
        ));
    }
    out
}
