//! Exact 2x2 tests, multiplicity control and information measures.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Relative slack when comparing table probabilities against the observed
/// one, so that tables tied in exact arithmetic are not lost to rounding.
pub const FISHER_REL_TOL: f64 = 1e-7;

/// `ln k!` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct LogFactorials(Vec<f64>);

impl LogFactorials {
    pub fn new(n: usize) -> Self {
        let mut t = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..=n {
            acc += (k as f64).ln();
            t.push(acc);
        }
        LogFactorials(t)
    }

    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

/// Hypergeometric probabilities of every feasible top-left cell for fixed
/// margins: row total `r1`, column total `c1`, grand total `n`. Returns the
/// lowest feasible cell value and the probabilities from there on.
fn hypergeometric_pmf(lf: &LogFactorials, n: usize, r1: usize, c1: usize) -> (usize, Vec<f64>) {
    let lo = (r1 + c1).saturating_sub(n);
    let hi = r1.min(c1);
    let denom = lf.ln_choose(n, r1);
    let pmf = (lo..=hi)
        .map(|x| (lf.ln_choose(c1, x) + lf.ln_choose(n - c1, r1 - x) - denom).exp())
        .collect();
    (lo, pmf)
}

fn two_sided(pmf: &[f64], obs: usize) -> f64 {
    let cut = pmf[obs] * (1.0 + FISHER_REL_TOL);
    pmf.iter().filter(|&&p| p <= cut).sum::<f64>().min(1.0)
}

/// Two-sided Fisher exact test on `[[a, b], [c, d]]`.
pub fn fisher_exact(table: [[u64; 2]; 2]) -> Result<f64> {
    let [[a, b], [c, d]] = table;
    let n = (a + b + c + d) as usize;
    if n == 0 {
        return Err(Error::InvalidInput("all-zero contingency table".into()));
    }
    let lf = LogFactorials::new(n);
    let (lo, pmf) = hypergeometric_pmf(&lf, n, (a + b) as usize, (a + c) as usize);
    Ok(two_sided(&pmf, a as usize - lo))
}

/// Fisher p-values for a fixed cohort: grand total `n` and `positives`
/// fixed, indexed by subgroup size and positives inside it. Rows are built
/// on first use and shared across threads.
pub struct FisherTable {
    n: usize,
    positives: usize,
    lf: LogFactorials,
    rows: Vec<OnceLock<(usize, Vec<f64>)>>,
}

impl FisherTable {
    pub fn new(n: usize, positives: usize) -> Self {
        FisherTable {
            n,
            positives,
            lf: LogFactorials::new(n),
            rows: (0..=n).map(|_| OnceLock::new()).collect(),
        }
    }

    /// p-value of a subgroup of `size` patients holding `inside` positives.
    pub fn p_value(&self, size: usize, inside: usize) -> f64 {
        let (lo, ps) = self.rows[size].get_or_init(|| {
            let (lo, pmf) = hypergeometric_pmf(&self.lf, self.n, size, self.positives);
            let mut order: Vec<usize> = (0..pmf.len()).collect();
            order.sort_by(|&x, &y| pmf[x].total_cmp(&pmf[y]));
            let mut cumulative = Vec::with_capacity(pmf.len());
            let mut acc = 0.0;
            for &i in &order {
                acc += pmf[i];
                cumulative.push(acc);
            }
            let sorted: Vec<f64> = order.iter().map(|&i| pmf[i]).collect();
            let ps = pmf
                .iter()
                .map(|&p| {
                    let cut = p * (1.0 + FISHER_REL_TOL);
                    let k = sorted.partition_point(|&q| q <= cut);
                    cumulative[k - 1].min(1.0)
                })
                .collect();
            (lo, ps)
        });
        ps[inside - lo]
    }
}

/// Benjamini–Hochberg adjusted q-values, in input order.
pub fn bh_qvalues(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p[i] * (m as f64 / (rank + 1) as f64));
        q[i] = running.min(1.0);
    }
    q
}

/// Step-up BH rejection at level `alpha`.
pub fn bh_reject(p: &[f64], alpha: f64) -> Vec<bool> {
    bh_qvalues(p).into_iter().map(|q| q <= alpha).collect()
}

/// Sample quantile with linear interpolation between order statistics
/// (the default "type 7" definition). `sorted` must be ascending.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bin index of every value among the nine decile cut points.
pub fn decile_bins(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..10).map(|k| quantile(&sorted, k as f64 / 10.0)).collect();
    values
        .iter()
        .map(|&v| cuts.iter().filter(|&&c| c < v).count())
        .collect()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalised mutual information `2 I(X;Y) / (H(X) + H(Y))` between two
/// labelings; 0 when either is constant.
pub fn nmi(x: &[usize], y: &[usize]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let kx = x.iter().max().map_or(0, |m| m + 1);
    let ky = y.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; kx * ky];
    let mut cx = vec![0usize; kx];
    let mut cy = vec![0usize; ky];
    for (&a, &b) in x.iter().zip(y) {
        joint[a * ky + b] += 1;
        cx[a] += 1;
        cy[b] += 1;
    }
    let nf = n as f64;
    let hx = entropy(cx.iter().copied(), nf);
    let hy = entropy(cy.iter().copied(), nf);
    if hx <= 0.0 || hy <= 0.0 {
        return 0.0;
    }
    let hxy = entropy(joint.iter().copied(), nf);
    let mi = (hx + hy - hxy).max(0.0);
    (2.0 * mi / (hx + hy)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fisher_examples() {
        assert!((fisher_exact([[5, 5], [5, 5]]).unwrap() - 1.0).abs() < 1e-12);
        assert!((fisher_exact([[8, 2], [2, 8]]).unwrap() - 0.023).abs() < 1e-3);
        let mut last = f64::INFINITY;
        for n in 1..20 {
            let p = fisher_exact([[n, 0], [0, n]]).unwrap();
            assert!(p < last);
            last = p;
        }
        assert!(fisher_exact([[0, 0], [0, 0]]).is_err());
    }

    #[test]
    fn table_matches_direct() {
        let t = FisherTable::new(40, 17);
        for s in 1usize..40 {
            for a in (s + 17).saturating_sub(40)..=s.min(17) {
                let direct = fisher_exact([
                    [a as u64, (s - a) as u64],
                    [(17 - a) as u64, (40 + a - s - 17) as u64],
                ])
                .unwrap();
                assert!((t.p_value(s, a) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bh_small_case() {
        let q = bh_qvalues(&[0.01, 0.04, 0.03, 0.5]);
        assert!((q[0] - 0.04).abs() < 1e-15);
        assert!((q[1] - 0.16f64 / 3.0).abs() < 1e-15);
        assert!((q[2] - 0.16f64 / 3.0).abs() < 1e-15);
        assert_eq!(q[3], 0.5);
        assert_eq!(bh_reject(&[0.01, 0.04, 0.03, 0.5], 0.05), vec![true, false, false, false]);
    }

    #[test]
    fn nmi_extremes() {
        let x = vec![0, 0, 1, 1, 2, 2];
        assert!((nmi(&x, &[5, 5, 3, 3, 0, 0]) - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0; 6], &x), 0.0);
        assert!(nmi(&x, &[0, 1, 0, 1, 0, 1]) < 1e-12);
    }

    #[test]
    fn deciles() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let bins = decile_bins(&v);
        for b in 0..10 {
            assert_eq!(bins.iter().filter(|&&x| x == b).count(), 10);
        }
        assert_eq!(decile_bins(&[3.0; 7]), vec![0; 7]);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }
}
