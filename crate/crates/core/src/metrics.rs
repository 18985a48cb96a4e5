//! Separation quality and clustering diagnostics.
//!
//! SI-SDR here is the scale-invariant projection metric, not the
//! filter-based BSS-eval SDR, so absolute values are not comparable with
//! numbers reported under BSS-eval.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Largest source count accepted by the exhaustive permutation searches.
pub const MAX_SOURCES: usize = 5;
pub const SI_SDR_CLAMP_DB: f64 = 100.0;

/// Scale-invariant signal-to-distortion ratio in dB, clamped to ±100 dB.
pub fn si_sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} samples, reference has {}",
            est.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|r| r * r).sum();
    if ref_energy == 0.0 {
        return Err(Error::InvalidInput("all-zero reference".into()));
    }
    let alpha = est.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / ref_energy;
    let target: f64 = alpha * alpha * ref_energy;
    let residual: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, r)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    let db = if target == 0.0 {
        -SI_SDR_CLAMP_DB
    } else if residual == 0.0 {
        SI_SDR_CLAMP_DB
    } else {
        10.0 * (target / residual).log10()
    };
    Ok(db.clamp(-SI_SDR_CLAMP_DB, SI_SDR_CLAMP_DB))
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

fn check_source_count(o: usize) -> Result<()> {
    if o == 0 || o > MAX_SOURCES {
        return Err(Error::InvalidInput(format!(
            "{o} sources; exhaustive permutation search supports 1..={MAX_SOURCES}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// SI-SDR of the estimate assigned to each reference, in reference order.
    pub per_speaker_si_sdr: Vec<f64>,
    /// `best_permutation[r]` is the estimate assigned to reference `r`.
    pub best_permutation: Vec<usize>,
    /// Mean SI-SDR of the mixture against each reference.
    pub mixture_si_sdr: f64,
    /// Mean assigned SI-SDR minus `mixture_si_sdr`.
    pub si_sdr_improvement: f64,
    pub mask_accuracy: Option<f64>,
    pub nmi: Option<f64>,
}

impl EvalReport {
    pub fn mean_si_sdr(&self) -> f64 {
        self.per_speaker_si_sdr.iter().sum::<f64>() / self.per_speaker_si_sdr.len() as f64
    }

    /// Adds clustering scores of predicted unit labels against the truth.
    pub fn with_clustering(mut self, pred: &[usize], truth: &[usize], o: usize) -> Result<Self> {
        self.mask_accuracy = Some(clustering_accuracy(pred, truth, o)?);
        self.nmi = Some(nmi(pred, truth)?);
        Ok(self)
    }

    pub const CSV_HEADER: &'static str =
        "id,speaker,assigned_estimate,si_sdr_db,mixture_si_sdr_db,si_sdr_improvement_db,mask_accuracy,nmi";

    /// CSV rows (no header), one per reference speaker.
    pub fn csv_rows(&self, id: &str) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut s = String::new();
        for (r, (sdr, est)) in self.per_speaker_si_sdr.iter().zip(&self.best_permutation).enumerate() {
            let _ = writeln!(
                s,
                "{id},{r},{est},{sdr:.6},{:.6},{:.6},{},{}",
                self.mixture_si_sdr,
                self.si_sdr_improvement,
                opt(self.mask_accuracy),
                opt(self.nmi)
            );
        }
        s
    }

    pub fn to_csv(&self, id: &str) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows(id))
    }

    pub fn to_text(&self, id: &str) -> String {
        let mut s = format!("mixture {id}\n");
        for (r, (sdr, est)) in self.per_speaker_si_sdr.iter().zip(&self.best_permutation).enumerate() {
            let _ = writeln!(s, "  speaker {r} <- estimate {est}: SI-SDR {sdr:.2} dB");
        }
        let _ = writeln!(s, "  mixture SI-SDR     {:.2} dB", self.mixture_si_sdr);
        let _ = writeln!(s, "  SI-SDR improvement {:.2} dB", self.si_sdr_improvement);
        if let Some(a) = self.mask_accuracy {
            let _ = writeln!(s, "  mask accuracy      {a:.4}");
        }
        if let Some(n) = self.nmi {
            let _ = writeln!(s, "  NMI                {n:.4}");
        }
        s
    }
}

/// Scores unordered estimates against references by trying every
/// assignment and keeping the one with the highest mean SI-SDR (ties: first
/// in lexicographic order).
pub fn permutation_invariant_eval(ests: &[Vec<f64>], refs: &[Vec<f64>], mixture: &[f64]) -> Result<EvalReport> {
    let o = refs.len();
    check_source_count(o)?;
    if ests.len() != o {
        return Err(Error::ShapeMismatch(format!("{} estimates for {o} references", ests.len())));
    }
    // scores[r][e]
    let scores = refs
        .iter()
        .map(|r| ests.iter().map(|e| si_sdr(e, r)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in permutations(o) {
        let mean = perm.iter().enumerate().map(|(r, &e)| scores[r][e]).sum::<f64>() / o as f64;
        if best.as_ref().is_none_or(|(b, _)| mean > *b) {
            best = Some((mean, perm));
        }
    }
    let (mean, perm) = best.expect("at least one permutation");
    let mixture_si_sdr = refs.iter().map(|r| si_sdr(mixture, r)).sum::<Result<f64>>()? / o as f64;
    Ok(EvalReport {
        per_speaker_si_sdr: perm.iter().enumerate().map(|(r, &e)| scores[r][e]).collect(),
        best_permutation: perm,
        mixture_si_sdr,
        si_sdr_improvement: mean - mixture_si_sdr,
        mask_accuracy: None,
        nmi: None,
    })
}

/// Fraction of agreeing labels under the best relabeling of `pred`.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize], o: usize) -> Result<f64> {
    check_source_count(o)?;
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no labels".into()));
    }
    let mut confusion = vec![vec![0usize; o]; o];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= o || t >= o {
            return Err(Error::InvalidInput(format!("label out of range for {o} classes")));
        }
        confusion[p][t] += 1;
    }
    let best = permutations(o)
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(p, &t)| confusion[p][t]).sum::<usize>())
        .max()
        .expect("at least one permutation");
    Ok(best as f64 / pred.len() as f64)
}

/// Normalized mutual information with natural-log entropies, normalized by
/// the arithmetic mean of the two entropies. Two constant labelings score 1.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no labels".into()));
    }
    let n = pred.len() as f64;
    let (a, b) = (
        pred.iter().max().copied().unwrap_or(0) + 1,
        truth.iter().max().copied().unwrap_or(0) + 1,
    );
    let mut joint = vec![0f64; a * b];
    let mut pa = vec![0f64; a];
    let mut pb = vec![0f64; b];
    for (&p, &t) in pred.iter().zip(truth) {
        joint[p * b + t] += 1.0;
        pa[p] += 1.0;
        pb[t] += 1.0;
    }
    let entropy = |c: &[f64]| -> f64 {
        c.iter().filter(|&&x| x > 0.0).map(|&x| -(x / n) * (x / n).ln()).sum()
    };
    let (ha, hb) = (entropy(&pa), entropy(&pb));
    let mut mi = 0.0;
    for p in 0..a {
        for t in 0..b {
            let j = joint[p * b + t];
            if j > 0.0 {
                mi += (j / n) * ((j * n) / (pa[p] * pb[t])).ln();
            }
        }
    }
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let denom = 0.5 * (ha + hb);
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn signal(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identical_and_scaled_hit_the_clamp() {
        let r = signal(1, 100);
        assert_eq!(si_sdr(&r, &r).unwrap(), 100.0);
        let twice: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        assert_eq!(si_sdr(&twice, &r).unwrap(), 100.0);
        assert!(si_sdr(&r, &vec![0.0; 100]).is_err());
        assert_eq!(si_sdr(&vec![0.0; 100], &r).unwrap(), -100.0);
    }

    #[test]
    fn orthogonal_noise_of_equal_power_is_zero_db() {
        let r = signal(2, 256);
        let mut n = signal(3, 256);
        let c = n.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / r.iter().map(|x| x * x).sum::<f64>();
        n.iter_mut().zip(&r).for_each(|(a, b)| *a -= c * b);
        let scale = (r.iter().map(|x| x * x).sum::<f64>() / n.iter().map(|x| x * x).sum::<f64>()).sqrt();
        let est: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + scale * b).collect();
        assert!(si_sdr(&est, &r).unwrap().abs() < 1e-9);
    }

    #[test]
    fn sign_flip_and_scale_invariance() {
        let r = signal(4, 300);
        let e = signal(5, 300).iter().zip(&r).map(|(a, b)| 0.3 * a + b).collect::<Vec<_>>();
        let base = si_sdr(&e, &r).unwrap();
        for s in [-1.0, 0.01, 7.5, -3.0] {
            let scaled: Vec<f64> = e.iter().map(|x| s * x).collect();
            assert!((si_sdr(&scaled, &r).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn swapped_estimates_are_recovered() {
        let (a, b) = (signal(6, 200), signal(7, 200));
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let rep = permutation_invariant_eval(&[b.clone(), a.clone()], &[a.clone(), b.clone()], &mix).unwrap();
        assert_eq!(rep.best_permutation, vec![1, 0]);
        assert_eq!(rep.mean_si_sdr(), 100.0);

        let base = permutation_invariant_eval(&[mix.clone(), mix.clone()], &[a.clone(), b.clone()], &mix).unwrap();
        assert!(base.si_sdr_improvement.abs() < 1e-12);

        let six = vec![a.clone(); 6];
        assert!(permutation_invariant_eval(&six, &six, &a).is_err());
    }

    #[test]
    fn pit_beats_identity_and_matches_brute_force() {
        let refs = vec![signal(8, 150), signal(9, 150)];
        let ests = vec![
            refs[1].iter().zip(signal(10, 150)).map(|(x, n)| x + 0.5 * n).collect::<Vec<_>>(),
            refs[0].iter().zip(signal(11, 150)).map(|(x, n)| x + 0.2 * n).collect::<Vec<_>>(),
        ];
        let mix: Vec<f64> = refs[0].iter().zip(&refs[1]).map(|(x, y)| x + y).collect();
        let rep = permutation_invariant_eval(&ests, &refs, &mix).unwrap();
        let identity = (si_sdr(&ests[0], &refs[0]).unwrap() + si_sdr(&ests[1], &refs[1]).unwrap()) / 2.0;
        let swapped = (si_sdr(&ests[1], &refs[0]).unwrap() + si_sdr(&ests[0], &refs[1]).unwrap()) / 2.0;
        assert_eq!(rep.mean_si_sdr(), identity.max(swapped));
        assert!(rep.mean_si_sdr() >= identity);
    }

    #[test]
    fn accuracy_and_nmi_basics() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(clustering_accuracy(&truth, &truth, 3).unwrap(), 1.0);
        assert_eq!(nmi(&truth, &truth).unwrap(), 1.0);
        let permuted: Vec<usize> = truth.iter().map(|&t| (t + 1) % 3).collect();
        assert_eq!(clustering_accuracy(&permuted, &truth, 3).unwrap(), 1.0);
        assert!((nmi(&permuted, &truth).unwrap() - 1.0).abs() < 1e-12);
        assert!(clustering_accuracy(&truth, &truth, 6).is_err());
    }

    #[test]
    fn independent_labels_have_tiny_nmi() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
            let b: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
            assert!(nmi(&a, &b).unwrap() < 0.01);
            assert!(clustering_accuracy(&a, &b, 2).unwrap() >= 0.5);
        }
    }

    #[test]
    fn report_formats() {
        let rep = EvalReport {
            per_speaker_si_sdr: vec![10.0, 12.5],
            best_permutation: vec![1, 0],
            mixture_si_sdr: 0.25,
            si_sdr_improvement: 11.0,
            mask_accuracy: Some(0.9),
            nmi: None,
        };
        let csv = rep.to_csv("m0");
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("m0,0,1,10.000000,0.250000,11.000000,0.900000,"));
        assert!(rep.to_text("m0").contains("estimate 1"));
    }
}
