//! USDA texture-triangle rule engine.
//!
//! Each class is an explicit predicate over (clay, silt, sand). The rules are
//! evaluated in [`TextureClass::ALL`] order; on the simplex exactly one of
//! them holds, which the partition scan in the tests checks on a 0.1 % grid.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spectral::{validate_composition, Composition, Provenance, TextureClass, COMPOSITION_SUM_TOL};

/// Clay / silt / sand percentages of the three source soils.
pub const CLAY_RICH: [f64; 3] = [78.63, 21.37, 0.00];
pub const SAND_RICH: [f64; 3] = [0.00, 0.00, 100.00];
pub const SILT_RICH: [f64; 3] = [5.75, 94.25, 0.00];

/// Source soils in mixing order: clay-rich, silt-rich, sand-rich.
pub fn endmember_compositions() -> [Composition; 3] {
    [CLAY_RICH, SILT_RICH, SAND_RICH]
        .map(|[c, si, sa]| validate_composition(c, si, sa).expect("endmembers are on the simplex"))
}

pub struct Rule {
    pub class: TextureClass,
    pub description: &'static str,
    pub predicate: fn(f64, f64, f64) -> bool,
}

pub const RULES: [Rule; 12] = [
    Rule {
        class: TextureClass::Sand,
        description: "silt + 1.5*clay < 15",
        predicate: |clay, silt, _| silt + 1.5 * clay < 15.0,
    },
    Rule {
        class: TextureClass::LoamySand,
        description: "silt + 1.5*clay >= 15 and silt + 2*clay < 30",
        predicate: |clay, silt, _| silt + 1.5 * clay >= 15.0 && silt + 2.0 * clay < 30.0,
    },
    Rule {
        class: TextureClass::SandyLoam,
        description: "(7 <= clay < 20 and sand > 52 and silt + 2*clay >= 30) \
                      or (clay < 7 and silt < 50 and silt + 2*clay >= 30)",
        predicate: |clay, silt, sand| {
            ((7.0..20.0).contains(&clay) && sand > 52.0 && silt + 2.0 * clay >= 30.0)
                || (clay < 7.0 && silt < 50.0 && silt + 2.0 * clay >= 30.0)
        },
    },
    Rule {
        class: TextureClass::Loam,
        description: "7 <= clay < 27 and 28 <= silt < 50 and sand <= 52",
        predicate: |clay, silt, sand| {
            (7.0..27.0).contains(&clay) && (28.0..50.0).contains(&silt) && sand <= 52.0
        },
    },
    Rule {
        class: TextureClass::SiltLoam,
        description: "(silt >= 50 and 12 <= clay < 27) or (50 <= silt < 80 and clay < 12)",
        predicate: |clay, silt, _| {
            (silt >= 50.0 && (12.0..27.0).contains(&clay))
                || ((50.0..80.0).contains(&silt) && clay < 12.0)
        },
    },
    Rule {
        class: TextureClass::Silt,
        description: "silt >= 80 and clay < 12",
        predicate: |clay, silt, _| silt >= 80.0 && clay < 12.0,
    },
    Rule {
        class: TextureClass::SandyClayLoam,
        description: "20 <= clay < 35 and silt < 28 and sand > 45",
        predicate: |clay, silt, sand| (20.0..35.0).contains(&clay) && silt < 28.0 && sand > 45.0,
    },
    Rule {
        class: TextureClass::ClayLoam,
        description: "27 <= clay < 40 and 20 < sand <= 45",
        predicate: |clay, _, sand| (27.0..40.0).contains(&clay) && sand > 20.0 && sand <= 45.0,
    },
    Rule {
        class: TextureClass::SiltyClayLoam,
        description: "27 <= clay < 40 and sand <= 20",
        predicate: |clay, _, sand| (27.0..40.0).contains(&clay) && sand <= 20.0,
    },
    Rule {
        class: TextureClass::SandyClay,
        description: "clay >= 35 and sand > 45",
        predicate: |clay, _, sand| clay >= 35.0 && sand > 45.0,
    },
    Rule {
        class: TextureClass::SiltyClay,
        description: "clay >= 40 and silt >= 40",
        predicate: |clay, silt, _| clay >= 40.0 && silt >= 40.0,
    },
    Rule {
        class: TextureClass::Clay,
        description: "clay >= 40 and sand <= 45 and silt < 40",
        predicate: |clay, silt, sand| clay >= 40.0 && sand <= 45.0 && silt < 40.0,
    },
];

/// Snaps each percentage to a 1e-9 grid so that values a few ulps off a
/// boundary (typical after renormalization) fall consistently on one side.
fn snap(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn off_simplex(c: &Composition) -> bool {
    let [clay, silt, sand] = c.as_array();
    !(clay >= 0.0 && silt >= 0.0 && sand >= 0.0) || (c.sum() - 100.0).abs() > COMPOSITION_SUM_TOL
}

/// Every class whose predicate holds; a well-formed rule set yields exactly one.
pub fn matching_classes(c: &Composition) -> Vec<TextureClass> {
    let (clay, silt, sand) = (snap(c.clay), snap(c.silt), snap(c.sand));
    RULES
        .iter()
        .filter(|r| (r.predicate)(clay, silt, sand))
        .map(|r| r.class)
        .collect()
}

pub fn classify_composition(c: &Composition) -> Result<TextureClass> {
    if off_simplex(c) {
        return Err(Error::OffSimplex {
            clay: c.clay,
            silt: c.silt,
            sand: c.sand,
        });
    }
    let (clay, silt, sand) = (snap(c.clay), snap(c.silt), snap(c.sand));
    RULES
        .iter()
        .find(|r| (r.predicate)(clay, silt, sand))
        .map(|r| r.class)
        .ok_or_else(|| {
            Error::NumericalFailure(format!("no texture rule covers ({clay}, {silt}, {sand})"))
        })
}

/// Clamps negative components to zero and rescales the triple to sum 100.
pub fn normalize_prediction(clay: f64, silt: f64, sand: f64) -> Result<Composition> {
    let parts = [clay, silt, sand].map(|v| if v.is_nan() { 0.0 } else { v.max(0.0) });
    let total: f64 = parts.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::AllNonPositive);
    }
    let [clay, silt, sand] = parts.map(|v| 100.0 * v / total);
    Ok(Composition {
        clay,
        silt,
        sand,
        provenance: Provenance::Predicted,
    })
}

/// Convex combination of endmember compositions by mass fraction.
pub fn mixture_composition(weights: &[f64], endmembers: &[Composition]) -> Result<Composition> {
    if weights.len() != endmembers.len() {
        return Err(Error::LengthMismatch(weights.len(), endmembers.len()));
    }
    if let Some(&w) = weights.iter().find(|&&w| !(w >= 0.0)) {
        return Err(Error::WeightSumViolation(w));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::WeightSumViolation(sum));
    }
    let mut acc = [0.0; 3];
    for (w, e) in weights.iter().zip(endmembers) {
        for (a, v) in acc.iter_mut().zip(e.as_array()) {
            *a += w * v;
        }
    }
    // Rounding in the weights can push the sum a few ulps off 100.
    let total: f64 = acc.iter().sum();
    let [clay, silt, sand] = acc.map(|v| v * 100.0 / total);
    validate_composition(clay, silt, sand)
}

/// Human-readable listing of the rule set.
pub fn rule_manifest() -> String {
    let mut out = String::from("# USDA texture triangle rules (percent clay, silt, sand)\n");
    for r in &RULES {
        let _ = writeln!(out, "{}: {}", r.class.name(), r.description);
    }
    out
}

/// Pairs of classes whose regions share an edge or a corner.
pub fn are_adjacent(a: TextureClass, b: TextureClass) -> bool {
    use TextureClass::*;
    const EDGES: &[(TextureClass, TextureClass)] = &[
        (Sand, LoamySand),
        (LoamySand, SandyLoam),
        (SandyLoam, Loam),
        (SandyLoam, SiltLoam),
        (SandyLoam, SandyClayLoam),
        (Loam, SiltLoam),
        (Loam, SandyClayLoam),
        (Loam, ClayLoam),
        (SiltLoam, Silt),
        (SiltLoam, ClayLoam),
        (SiltLoam, SiltyClayLoam),
        (SandyClayLoam, ClayLoam),
        (SandyClayLoam, SandyClay),
        (ClayLoam, SiltyClayLoam),
        (ClayLoam, SandyClay),
        (ClayLoam, Clay),
        (ClayLoam, SiltyClay),
        (SiltyClayLoam, SiltyClay),
        (SiltyClayLoam, Clay),
        (SandyClay, Clay),
        (SiltyClay, Clay),
    ];
    a == b || EDGES.iter().any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
}
