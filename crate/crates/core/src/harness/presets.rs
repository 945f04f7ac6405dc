//! Built-in experiment presets.

use super::ExperimentConfig;
use crate::error::{arg, Result};
use crate::geometry::{Architecture, InputSpace, Stride};
use crate::regression::RidgePolicy;

/// Sample sizes and trial counts applied on top of a preset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scale {
    pub trials: usize,
    pub n_max: usize,
    pub n_test: usize,
}

impl Scale {
    /// 16 trials, `n` up to 8192, 8192 test points.
    pub const FULL: Scale = Scale { trials: 16, n_max: 8192, n_test: 8192 };
    /// Reduced-accuracy mode for continuous integration.
    pub const REDUCED: Scale = Scale { trials: 4, n_max: 2048, n_test: 2048 };

    pub fn apply(&self, mut c: ExperimentConfig) -> ExperimentConfig {
        c.trials = self.trials;
        c.n_test = self.n_test;
        c.n_list = powers_of_two(128, self.n_max);
        c
    }
}

fn powers_of_two(lo: usize, hi: usize) -> Vec<usize> {
    std::iter::successors(Some(lo), |&n| Some(2 * n)).take_while(|&n| n <= hi).collect()
}

fn ntk(f: &[usize], top: usize) -> Architecture {
    Architecture::ntk(f, top).expect("preset architecture")
}

fn rfk(f: &[usize], top: usize) -> Architecture {
    Architecture::rfk(f, top).expect("preset architecture")
}

fn base(name: &str, description: &str, teacher: Architecture, student: Architecture) -> ExperimentConfig {
    let s = student.filter(1);
    Scale::FULL.apply(ExperimentConfig {
        name: name.into(),
        description: description.into(),
        teacher,
        student,
        space: InputSpace::Multisphere { s },
        stride: Stride::Filter,
        n_list: Vec::new(),
        n_test: 0,
        trials: 0,
        seed: 1,
        ridge: RidgePolicy::Ridgeless,
        noise_std: 0.0,
        replica: false,
        tolerance: 0.15,
        out: None,
    })
}

/// All presets at full scale.
pub fn presets() -> Vec<ExperimentConfig> {
    let mut v = vec![
        ExperimentConfig {
            replica: true,
            ..base("matched-shallow", "shallow NTK student and teacher, s = 2, p = 4", ntk(&[2], 4), ntk(&[2], 4))
        },
        ExperimentConfig {
            tolerance: 0.1,
            ..base("depth3-on-shallow", "(2,2) student, shallow teacher on two patches", ntk(&[2], 2), ntk(&[2, 2], 1))
        },
        ExperimentConfig {
            tolerance: 0.1,
            ..base("depth3-matched", "(2,2) student and teacher: global target", ntk(&[2, 2], 1), ntk(&[2, 2], 1))
        },
        ExperimentConfig {
            tolerance: 0.1,
            ..base(
                "depth4-on-shallow",
                "(2,2,2) student, shallow teacher on four patches",
                ntk(&[2], 4),
                ntk(&[2, 2, 2], 1),
            )
        },
        ExperimentConfig {
            tolerance: 0.1,
            ..base(
                "depth4-on-depth3",
                "(2,2,2) student, (2,2) teacher on two windows",
                ntk(&[2, 2], 2),
                ntk(&[2, 2, 2], 1),
            )
        },
        ExperimentConfig {
            tolerance: 0.1,
            ..base(
                "depth4-matched",
                "(2,2,2) student and teacher: global target",
                ntk(&[2, 2, 2], 1),
                ntk(&[2, 2, 2], 1),
            )
        },
        ExperimentConfig {
            tolerance: 0.1,
            ..base("curse-deff3", "(2,3) student and teacher, d_eff(L) = 3", ntk(&[2, 3], 1), ntk(&[2, 3], 1))
        },
        ExperimentConfig {
            tolerance: 0.1,
            ..base("curse-deff4", "(2,4) student and teacher, d_eff(L) = 4", ntk(&[2, 4], 1), ntk(&[2, 4], 1))
        },
        base("ternary-shallow", "shallow NTK student and teacher, s = 3, p = 4", ntk(&[3], 4), ntk(&[3], 4)),
        base(
            "ternary-depth3-on-shallow",
            "(3,2) student, shallow s = 3 teacher on two patches",
            ntk(&[3], 2),
            ntk(&[3, 2], 1),
        ),
        ExperimentConfig {
            ridge: RidgePolicy::Optimal { lo: 1e-7, hi: 10.0, points: 49 },
            noise_std: 0.1,
            ..base(
                "noisy-optimal-depth3",
                "(2,2) student and teacher, sigma = 0.1, optimal ridge",
                ntk(&[2, 2], 1),
                ntk(&[2, 2], 1),
            )
        },
        ExperimentConfig {
            space: InputSpace::Hypercube,
            ..base("hypercube-shallow", "matched shallow NTK on the unit hypercube", ntk(&[2], 4), ntk(&[2], 4))
        },
        ExperimentConfig {
            space: InputSpace::Gaussian,
            ..base("gaussian-shallow", "matched shallow NTK on Gaussian inputs", ntk(&[2], 4), ntk(&[2], 4))
        },
        ExperimentConfig {
            space: InputSpace::Hypercube,
            stride: Stride::One,
            ..base("overlap-shallow", "matched shallow NTK, stride 1, hypercube inputs", ntk(&[2], 4), ntk(&[2], 4))
        },
        ExperimentConfig {
            tolerance: 0.2,
            ..base(
                "rfk-hierarchical",
                "(2,2) RFK student and teacher: hierarchical target",
                rfk(&[2, 2], 1),
                rfk(&[2, 2], 1),
            )
        },
    ];
    for (i, c) in v.iter_mut().enumerate() {
        c.seed = 1000 + i as u64;
    }
    v
}

pub fn preset_names() -> Vec<String> {
    presets().into_iter().map(|c| c.name).collect()
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match presets().into_iter().find(|c| c.name == name) {
        Some(c) => Ok(c),
        None => arg(format!("unknown preset `{name}`; known: {}", preset_names().join(", "))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::predicted_exponent;

    #[test]
    fn presets_are_valid_and_predicted() {
        let want = [
            ("matched-shallow", 1.0),
            ("depth3-on-shallow", 0.75),
            ("depth3-matched", 0.5),
            ("depth4-on-shallow", 0.625),
            ("depth4-on-depth3", 5.0 / 12.0),
            ("depth4-matched", 0.25),
            ("curse-deff3", 1.0 / 3.0),
            ("curse-deff4", 0.25),
            ("ternary-shallow", 0.5),
            ("ternary-depth3-on-shallow", 5.0 / 12.0),
            ("rfk-hierarchical", 1.5),
        ];
        for c in presets() {
            c.validate().unwrap();
            assert_eq!(c.trials, 16);
            assert_eq!(c.n_list, vec![128, 256, 512, 1024, 2048, 4096, 8192]);
            let b = predicted_exponent(&c.student, &c.target().unwrap()).unwrap();
            if let Some(&(_, w)) = want.iter().find(|(n, _)| *n == c.name) {
                assert!((b - w).abs() < 1e-12, "{}: {b} vs {w}", c.name);
            }
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn configs_round_trip_through_toml() {
        for c in presets() {
            let text = c.to_toml();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash(), c.hash());
        }
        let a = preset("matched-shallow").unwrap();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn reduced_scale() {
        let c = Scale::REDUCED.apply(preset("matched-shallow").unwrap());
        assert_eq!(c.n_list, vec![128, 256, 512, 1024, 2048]);
        assert_eq!((c.trials, c.n_test), (4, 2048));
    }
}
