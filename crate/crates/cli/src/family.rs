use serde::Serialize;
use spreadlab::families::{k_uniform_family, perfect_matchings, KUniformFamily, MatchingFamily};
use spreadlab::format::parse_family_file;
use spreadlab::moments::OverlapSource;
use spreadlab::{Budget, DiscreteMeasure};

use crate::args::{Builtin, FamilyArgs};
use crate::error::CliError;

pub enum Family {
    Matchings(MatchingFamily),
    KUniform(KUniformFamily),
    File(DiscreteMeasure),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySummary {
    pub label: String,
    pub universe: usize,
    /// Support size; absent for closed-form-only families.
    pub members: Option<usize>,
    pub k: usize,
}

impl Family {
    pub fn load(args: &FamilyArgs, budget: &Budget) -> Result<Self, CliError> {
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| CliError::Usage(format!("--{name} is required for this family")))
        };
        if args.closed_form && args.family != Some(Builtin::KUniform) {
            return Err(CliError::Usage("--closed-form applies to --family k-uniform only".into()));
        }
        match (args.family, &args.family_file) {
            (Some(Builtin::Matchings), None) => {
                if args.k.is_some() {
                    return Err(CliError::Usage("--k does not apply to matchings".into()));
                }
                Ok(Family::Matchings(perfect_matchings(need(args.n, "n")?)?))
            }
            (Some(Builtin::KUniform), None) => Ok(Family::KUniform(k_uniform_family(
                need(args.n, "n")?,
                need(args.k, "k")?,
                args.closed_form,
                budget,
            )?)),
            (None, Some(path)) => {
                if args.n.is_some() || args.k.is_some() {
                    return Err(CliError::Usage("--n/--k do not apply to a family file".into()));
                }
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                Ok(Family::File(DiscreteMeasure::from_family_file(parse_family_file(&text)?)?))
            }
            (None, None) => Err(CliError::Usage("give --family or --family-file".into())),
            (Some(_), Some(_)) => Err(CliError::Usage("give only one of --family and --family-file".into())),
        }
    }

    pub fn measure(&self) -> Option<&DiscreteMeasure> {
        match self {
            Family::Matchings(f) => Some(f.measure()),
            Family::KUniform(f) => f.measure(),
            Family::File(m) => Some(m),
        }
    }

    /// The member list, or a usage error for closed-form-only families.
    pub fn require_measure(&self, what: &str) -> Result<&DiscreteMeasure, CliError> {
        self.measure()
            .ok_or_else(|| CliError::Usage(format!("{what} needs a materialized family; drop --closed-form")))
    }

    pub fn overlap_source(&self) -> &dyn OverlapSource {
        match self {
            Family::Matchings(f) => f,
            Family::KUniform(f) => f,
            Family::File(m) => m,
        }
    }

    pub fn summary(&self) -> FamilySummary {
        match self {
            Family::Matchings(f) => FamilySummary {
                label: format!("matchings of K_{}", f.n()),
                universe: f.measure().universe().size(),
                members: Some(f.measure().support_size()),
                k: f.n() / 2,
            },
            Family::KUniform(f) => FamilySummary {
                label: format!("{}-subsets of [{}]", f.k(), f.n()),
                universe: f.n(),
                members: f.measure().map(DiscreteMeasure::support_size),
                k: f.k(),
            },
            Family::File(m) => FamilySummary {
                label: "family file".into(),
                universe: m.universe().size(),
                members: Some(m.support_size()),
                k: m.max_size(),
            },
        }
    }
}
