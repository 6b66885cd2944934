//! Named problem instances used by the CLI, the examples and the tests.

use super::{FunctionDesc, ProblemSpec};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub spec: fn() -> ProblemSpec,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "ou_1d",
        description: "Ornstein-Uhlenbeck, b1 = 0, b2 = -x, sigma = 1 (invariant law N(0, 1/2))",
        spec: ou_1d,
    },
    Preset {
        name: "bump_1d",
        description: "Case 1: b1 = 1{|x| <= 0.5}, b2 = -x, sigma = 1",
        spec: bump_1d,
    },
    Preset {
        name: "holder_1d",
        description: "Case 2: b1 = 0.5 |sin x|^0.25, b2 = -x, sigma = 1",
        spec: holder_1d,
    },
    Preset {
        name: "holder_2d",
        description: "Case 2 in 2D: b1 = 0.5 |sin x_i|^0.25, b2 = -x, sigma = diag(1 + 0.2 sin x_i)",
        spec: holder_2d,
    },
    Preset {
        name: "bump_2d",
        description: "Case 1 in 2D: b1 = 1{|x| <= 0.5} e_1, b2 = -x, sigma = I",
        spec: bump_2d,
    },
];

pub fn preset(name: &str) -> Option<ProblemSpec> {
    PRESETS.iter().find(|p| p.name == name).map(|p| (p.spec)())
}

fn base(name: &str, dim: usize, b1: FunctionDesc) -> ProblemSpec {
    ProblemSpec {
        name: Some(name.to_string()),
        dim,
        case: "case1".into(),
        alpha: None,
        theta1: 1.0,
        theta2: 0.0,
        theta3: 1.0,
        lambda_sigma: 0.9,
        b1,
        b2: FunctionDesc::linear_scale(-1.0),
        sigma: FunctionDesc::constant_scale(1.0),
    }
}

pub fn ou_1d() -> ProblemSpec {
    base("ou_1d", 1, FunctionDesc::zero())
}

pub fn bump_1d() -> ProblemSpec {
    base("bump_1d", 1, FunctionDesc::bump(1.0, 0.5))
}

pub fn holder_1d() -> ProblemSpec {
    ProblemSpec {
        case: "case2".into(),
        alpha: Some(0.25),
        ..base("holder_1d", 1, FunctionDesc::holder_sine(0.5, 0.25))
    }
}

pub fn holder_2d() -> ProblemSpec {
    ProblemSpec {
        case: "case2".into(),
        alpha: Some(0.25),
        lambda_sigma: 0.5,
        sigma: FunctionDesc::diagonal_sine_matrix(1.0, 0.2, 1.0),
        ..base("holder_2d", 2, FunctionDesc::holder_sine(0.5, 0.25))
    }
}

pub fn bump_2d() -> ProblemSpec {
    base("bump_2d", 2, FunctionDesc::bump(1.0, 0.5))
}
