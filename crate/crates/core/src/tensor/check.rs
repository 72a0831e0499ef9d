use super::{Graph, ParamId, ParamStore, TensorError, Var};

/// Worst central-difference mismatch for one parameter tensor.
#[derive(Debug, Clone)]
pub struct FdEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries skipped because the perturbation crossed a relu kink.
    pub excluded: usize,
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
    pub tolerance: f64,
}

impl FdReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tolerance
    }

    pub fn checked(&self) -> usize {
        self.entries.iter().map(|e| e.checked).sum()
    }
}

/// Gradients smaller than this are compared in absolute terms.
pub const FD_SCALE_FLOOR: f64 = 1e-4;

/// Compare reverse-mode gradients of the scalar built by `build` against
/// central differences with step `step`.
///
/// The relative error of one entry is `|analytic - numeric| / max(|analytic|,
/// |numeric|, FD_SCALE_FLOOR)`. Entries whose `+step` or `-step` evaluation
/// changes any relu sign pattern are excluded. At most `max_entries` evenly
/// strided entries per parameter are probed (`None` probes all of them).
pub fn finite_difference_check<F>(
    params: &ParamStore,
    build: F,
    step: f64,
    tolerance: f64,
    max_entries: Option<usize>,
) -> Result<FdReport, TensorError>
where
    F: Fn(&mut Graph) -> Result<Var, TensorError>,
{
    let (analytic, base_sig) = {
        let mut g = Graph::new(params);
        let out = build(&mut g)?;
        (g.backward(out)?, g.kink_signature())
    };
    let eval = |store: &ParamStore| -> Result<(f64, u64), TensorError> {
        let mut g = Graph::new(store);
        let out = build(&mut g)?;
        Ok((g.value(out).item(), g.kink_signature()))
    };

    let mut work = params.clone();
    let mut entries = Vec::new();
    for id in params.ids() {
        let len = params.get(id).len();
        let stride = match max_entries {
            Some(k) if k > 0 && len > k => len.div_ceil(k),
            _ => 1,
        };
        let mut entry = FdEntry {
            name: params.name(id).to_string(),
            max_rel_error: 0.0,
            checked: 0,
            excluded: 0,
        };
        for i in (0..len).step_by(stride) {
            let orig = params.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + step;
            let (fp, sp) = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig - step;
            let (fm, sm) = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            if sp != base_sig || sm != base_sig {
                entry.excluded += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * step);
            let a = analytic_entry(&analytic, id, i);
            let denom = a.abs().max(numeric.abs()).max(FD_SCALE_FLOOR);
            entry.max_rel_error = entry.max_rel_error.max((a - numeric).abs() / denom);
            entry.checked += 1;
        }
        entries.push(entry);
    }
    Ok(FdReport { entries, tolerance })
}

fn analytic_entry(grads: &super::GradientMap, id: ParamId, i: usize) -> f64 {
    grads.get(id).map_or(0.0, |t| t.data()[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    const STEP: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn linear_layer_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ps = ParamStore::new();
        let w = ps.insert("w", random(4, 3, &mut rng)).unwrap();
        let b = ps.insert("b", random(1, 3, &mut rng)).unwrap();
        let x = random(5, 4, &mut rng);
        let rep = finite_difference_check(
            &ps,
            |g| {
                let xi = g.input(x.clone())?;
                let y = g.linear(xi, w, Some(b))?;
                let sq = g.mul(y, y)?;
                g.sum(sq)
            },
            STEP,
            TOL,
            None,
        )
        .unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn relu_kink_entries_are_excluded() {
        let mut ps = ParamStore::new();
        let x = ps.insert("x", Tensor::row(vec![0.0, 1.0])).unwrap();
        let rep = finite_difference_check(
            &ps,
            |g| {
                let v = g.param(x);
                let r = g.relu(v)?;
                g.sum(r)
            },
            STEP,
            TOL,
            None,
        )
        .unwrap();
        assert_eq!(rep.entries[0].excluded, 1);
        assert_eq!(rep.entries[0].checked, 1);
        assert!(rep.passed());
    }

    #[test]
    fn cosine_pair_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamStore::new();
        let a = ps.insert("a", random(3, 4, &mut rng)).unwrap();
        let b = ps.insert("b", random(3, 4, &mut rng)).unwrap();
        let rep = finite_difference_check(
            &ps,
            |g| {
                let (va, vb) = (g.param(a), g.param(b));
                g.cosine(va, vb)
            },
            STEP,
            TOL,
            None,
        )
        .unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    /// Every primitive on random shapes and seeds, composed three layers deep.
    #[test]
    fn every_primitive_matches_central_differences() {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = rng.random_range(2..6);
            let din = rng.random_range(1..5);
            let dh = rng.random_range(2..5);
            let out_rows = rng.random_range(1..4);
            let segments: Arc<Vec<usize>> =
                Arc::new((0..rows).map(|_| rng.random_range(0..out_rows)).collect());
            let gather: Arc<Vec<usize>> =
                Arc::new((0..rows + 1).map(|_| rng.random_range(0..rows)).collect());
            let mut ps = ParamStore::new();
            let w1 = ps.insert("w1", random(din, dh, &mut rng)).unwrap();
            let b1 = ps.insert("b1", random(1, dh, &mut rng)).unwrap();
            let w2 = ps.insert("w2", random(2 * dh, dh, &mut rng)).unwrap();
            let w3 = ps.insert("w3", random(dh, 3, &mut rng)).unwrap();
            let x = random(rows, din, &mut rng);
            let target = random(1, 3, &mut rng);
            let rep = finite_difference_check(
                &ps,
                |g| {
                    let xi = g.input(x.clone())?;
                    let h1 = g.linear(xi, w1, Some(b1))?;
                    let h1 = g.relu(h1)?;
                    let gathered = g.gather_rows(h1, gather.clone())?;
                    let pooled = g.mean_pool(gathered)?;
                    let seg = g.segment_mean(h1, segments.clone(), out_rows)?;
                    let seg_sum = g.segment_sum(h1, segments.clone(), out_rows)?;
                    let seg = g.add(seg, seg_sum)?;
                    let cat = g.concat_cols(seg, seg)?;
                    let h2 = g.linear(cat, w2, None)?;
                    let h2 = g.mul(h2, seg)?;
                    let h3 = g.linear(h2, w3, None)?;
                    let sm = g.softmax(h3)?;
                    let lg = g.log(sm)?;
                    let ls = g.log_softmax(h3)?;
                    let both = g.add(lg, ls)?;
                    let t = g.transpose(both)?;
                    let t = g.transpose(t)?;
                    let pooled2 = g.mean_pool(t)?;
                    let tgt = g.input(target.clone())?;
                    let weighted = g.mul(pooled2, tgt)?;
                    let s = g.sum(weighted)?;
                    let s = g.scale(s, 0.5)?;
                    let cosv = g.cosine(pooled, pooled)?;
                    let h1p = g.mean_pool(h2)?;
                    let cos2 = g.cosine(h1p, h1p)?;
                    let extra = g.add(cosv, cos2)?;
                    g.add(s, extra)
                },
                STEP,
                TOL,
                None,
            )
            .unwrap();
            assert!(rep.passed(), "seed {seed}: {rep:?}");
        }
    }
}
