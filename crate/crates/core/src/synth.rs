//! Seeded synthetic flow table with hierarchical three-stage labels.
//!
//! Stage II traffic is 5% Tor, 5% VPN, 45% Non-Tor and 45% Non-VPN, so stage
//! I (Malicious = Tor or VPN) is imbalanced 9:1. The application class is
//! drawn uniformly and independently of the network class.
//!
//! Eight columns carry signal as unit-variance Gaussians whose means move by
//! `separation` standard deviations with the class:
//!
//! | column | mean shifts when |
//! |--------|------------------|
//! | 0 | VPN or Non-VPN |
//! | 1 | Tor |
//! | 2 | VPN |
//! | 3 | Tor or VPN |
//! | 4-6 | bit 0-2 of the application index |
//! | 7 | application index (ordinal, one shift per step) |
//!
//! The remaining twelve columns are noise with assorted distributions.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Uniform};

use crate::data::{ClassTaxonomy, DataError, Dataset, Stage};
use crate::matrix::Matrix;

pub const N_INFORMATIVE: usize = 8;
pub const N_NOISE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_rows: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_rows: 5000,
            separation: 6.0,
            seed: 0,
        }
    }
}

/// A generated table: shared features plus one label vector per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDtc {
    pub features: Matrix,
    pub feature_names: Vec<String>,
    /// Stage I, II and III labels, indices into the standard taxonomies.
    pub labels: [Vec<usize>; 3],
}

const TOR: usize = 0;
const NON_TOR: usize = 1;
const VPN: usize = 2;
const NON_VPN: usize = 3;

pub fn generate(params: &SynthParams) -> SynthDtc {
    let n = params.n_rows;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let n_tor = (n as f64 * 0.05).round() as usize;
    let n_vpn = n_tor;
    let n_non_tor = (n - n_tor - n_vpn) / 2;
    let mut network: Vec<usize> = [
        (TOR, n_tor),
        (VPN, n_vpn),
        (NON_TOR, n_non_tor),
        (NON_VPN, n - n_tor - n_vpn - n_non_tor),
    ]
    .iter()
    .flat_map(|&(c, count)| std::iter::repeat_n(c, count))
    .collect();
    network.shuffle(&mut rng);
    let app: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
    let malicious: Vec<usize> = network.iter().map(|&c| usize::from(c == TOR || c == VPN)).collect();

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let lognormal = LogNormal::new(0.0, 1.0).expect("lognormal");
    let exp = Exp::new(0.5).expect("exponential");
    let uniform = Uniform::new(0.0f64, 100.0).expect("uniform");
    let s = params.separation;

    let mut data = Vec::with_capacity(n * (N_INFORMATIVE + N_NOISE));
    for i in 0..n {
        let net = network[i];
        let a = app[i];
        let shifts = [
            f64::from(u8::from(net == VPN || net == NON_VPN)),
            f64::from(u8::from(net == TOR)),
            f64::from(u8::from(net == VPN)),
            malicious[i] as f64,
            (a & 1) as f64,
            ((a >> 1) & 1) as f64,
            ((a >> 2) & 1) as f64,
            a as f64,
        ];
        data.extend(shifts.iter().map(|&shift| s * shift + unit.sample(&mut rng)));
        for j in 0..N_NOISE {
            data.push(match j % 4 {
                0 => unit.sample(&mut rng),
                1 => lognormal.sample(&mut rng),
                2 => exp.sample(&mut rng),
                _ => uniform.sample(&mut rng).floor(),
            });
        }
    }
    let feature_names = (0..N_INFORMATIVE + N_NOISE).map(|j| format!("f{j:02}")).collect();
    SynthDtc {
        features: Matrix::from_vec(n, N_INFORMATIVE + N_NOISE, data),
        feature_names,
        labels: [malicious, network, app],
    }
}

impl SynthDtc {
    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    /// The shared features labelled for one pipeline stage.
    pub fn dataset(&self, stage: Stage) -> Result<Dataset, DataError> {
        let (idx, tax) = match stage.index().zip(ClassTaxonomy::for_stage(stage)) {
            Some(pair) => pair,
            None => return Err(DataError::InvalidTaxonomy(format!("no synthetic labels for {stage}"))),
        };
        Dataset::new(
            self.features.clone(),
            self.feature_names.clone(),
            self.labels[idx].clone(),
            tax,
        )
    }

    pub fn datasets(&self) -> Result<Vec<Dataset>, DataError> {
        Stage::PIPELINE.iter().map(|&s| self.dataset(s)).collect()
    }

    /// CSV with the feature columns then `label_stage1..3` as class names.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.feature_names.clone();
        header.extend(Stage::PIPELINE.iter().map(|s| format!("label_{}", s.key())));
        w.write_record(&header)?;
        let taxes = Stage::PIPELINE.map(|s| ClassTaxonomy::for_stage(s).expect("pipeline stage"));
        for (i, row) in self.features.rows().enumerate() {
            let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            for (labels, tax) in self.labels.iter().zip(&taxes) {
                record.push(tax.name(labels[i]).expect("label in range").to_string());
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_class_balance() {
        let s = generate(&SynthParams::default());
        assert_eq!(s.features.n_rows(), 5000);
        assert_eq!(s.features.n_cols(), 20);
        let malicious = s.labels[0].iter().filter(|&&l| l == 1).count();
        assert_eq!(malicious, 500);
        let d2 = s.dataset(Stage::StageII).unwrap();
        assert_eq!(d2.class_counts(), vec![250, 2250, 250, 2250]);
        assert_eq!(s.dataset(Stage::StageIII).unwrap().n_classes(), 8);
        for (&l1, &l2) in s.labels[0].iter().zip(&s.labels[1]) {
            assert_eq!(l1 == 1, l2 == TOR || l2 == VPN);
        }
    }

    #[test]
    fn seeded() {
        let p = SynthParams {
            n_rows: 300,
            ..SynthParams::default()
        };
        assert_eq!(generate(&p), generate(&p));
        assert_ne!(generate(&p), generate(&SynthParams { seed: 1, ..p }));
    }

    #[test]
    fn csv_round_trips_through_loader() {
        let s = generate(&SynthParams {
            n_rows: 40,
            ..SynthParams::default()
        });
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let table = crate::data::parse_flow_csv(&buf, b',', "synth").unwrap();
        assert_eq!(table.n_rows(), 40);
        assert_eq!(table.header.len(), 23);
        assert_eq!(table.header[22], "label_stage3");
    }
}
