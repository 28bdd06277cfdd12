use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real};

/// Epsilon in the key normalization `k / (‖k‖ + ε)`.
pub const KEY_EPS: f64 = 1e-6;

/// Window applied to decay pre-activations so `exp(−exp(x))` stays strictly
/// inside `(0, 1)` in single precision.
pub const DECAY_RAW_RANGE: (f64, f64) = (-12.0, 3.0);
/// Window applied to in-context rate pre-activations, same purpose.
pub const RATE_RAW_RANGE: (f64, f64) = (-15.0, 15.0);

/// Decay `exp(−exp(x))` of a pre-activation.
#[inline]
pub fn decay_from_raw(x: f64) -> f64 {
    (-x.clamp(DECAY_RAW_RANGE.0, DECAY_RAW_RANGE.1).exp()).exp()
}

/// In-context rate `σ(x)` of a pre-activation.
#[inline]
pub fn rate_from_raw(x: f64) -> f64 {
    crate::numerics::sigmoid(x.clamp(RATE_RAW_RANGE.0, RATE_RAW_RANGE.1))
}

#[inline]
pub(crate) fn in_window(x: f64, range: (f64, f64)) -> bool {
    x >= range.0 && x <= range.1
}

/// `μ ⊙ x + (1 − μ) ⊙ prev`.
pub fn token_shift<T: Real>(x: &[T], prev: &[T], mu: &[T]) -> Result<Vec<T>> {
    if x.len() != prev.len() || x.len() != mu.len() {
        return Err(Error::shape(
            x.len(),
            (prev.len(), mu.len()),
            "token_shift operand lengths",
        ));
    }
    let mut out = vec![T::zero(); x.len()];
    shift_into(x, prev, mu, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn shift_into<T: Real>(x: &[T], prev: &[T], mu: &[T], out: &mut [T]) {
    for (((o, &xi), &pi), &m) in out.iter_mut().zip(x).zip(prev).zip(mu) {
        let m = m.wide();
        *o = T::of(m * xi.wide() + (1.0 - m) * pi.wide());
    }
}

/// Writes `k / (‖k‖ + ε)` into `out` and returns `‖k‖`.
#[inline]
pub(crate) fn normalize_key<T: Real>(k: &[T], out: &mut [T]) -> f64 {
    let norm = k.iter().map(|v| v.wide() * v.wide()).sum::<f64>().sqrt();
    let c = norm + KEY_EPS;
    for (o, &v) in out.iter_mut().zip(k) {
        *o = T::of(v.wide() / c);
    }
    norm
}

/// One head of the delta-rule update, in place:
/// `S ← S·(diag(w) − κ̂ (a⊙κ̂)ᵀ) + v kᵀ`, then `y = S·r`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn wkv_head<T: Real>(
    s: &mut [T],
    n: usize,
    w: &[T],
    khat: &[T],
    a: &[T],
    k: &[T],
    v: &[T],
    r: &[T],
    y: &mut [T],
) {
    for i in 0..n {
        let row = &mut s[i * n..(i + 1) * n];
        let mut sk = 0f64;
        for (&sv, &kh) in row.iter().zip(khat) {
            sk += sv.wide() * kh.wide();
        }
        let vi = v[i].wide();
        let mut yi = 0f64;
        for j in 0..n {
            let b = a[j].wide() * khat[j].wide();
            let nv = row[j].wide() * w[j].wide() - sk * b + vi * k[j].wide();
            let nv = T::of(nv);
            row[j] = nv;
            yi += nv.wide() * r[j].wide();
        }
        y[i] = T::of(yi);
    }
}

/// Single-head delta-rule step on an explicit `N×N` state.
///
/// Decay entries must lie in `(0, 1]` and in-context rates in `[0, 1]`; the
/// model only produces such values, so a violation indicates a bug upstream.
pub fn wkv_step<T: Real>(
    state: &Matrix<T>,
    w: &[T],
    k: &[T],
    v: &[T],
    a: &[T],
    r: &[T],
) -> Result<(Vec<T>, Matrix<T>)> {
    let n = w.len();
    if state.shape() != (n, n) {
        return Err(Error::shape(state.shape(), (n, n), "wkv_step state"));
    }
    for (name, vec) in [("k", k), ("v", v), ("a", a), ("r", r)] {
        if vec.len() != n {
            return Err(Error::shape(n, vec.len(), match name {
                "k" => "wkv_step key length",
                "v" => "wkv_step value length",
                "a" => "wkv_step rate length",
                _ => "wkv_step receptance length",
            }));
        }
    }
    if let Some(bad) = w.iter().find(|x| !(x.wide() > 0.0 && x.wide() <= 1.0)) {
        return Err(Error::Parameter(format!("decay {bad} outside (0, 1]")));
    }
    if let Some(bad) = a.iter().find(|x| !(x.wide() >= 0.0 && x.wide() <= 1.0)) {
        return Err(Error::Parameter(format!("in-context rate {bad} outside [0, 1]")));
    }
    let mut khat = vec![T::zero(); n];
    normalize_key(k, &mut khat);
    let mut next = state.clone();
    let mut y = vec![T::zero(); n];
    wkv_head(next.as_mut_slice(), n, w, &khat, a, k, v, r, &mut y);
    Ok((y, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    #[test]
    fn shift_degenerate_mixes() {
        let x = [1.0f32, 2.0];
        let p = [5.0f32, 6.0];
        assert_eq!(token_shift(&x, &p, &[1.0, 1.0]).unwrap(), x.to_vec());
        assert_eq!(token_shift(&x, &p, &[0.0, 0.0]).unwrap(), p.to_vec());
        assert_eq!(token_shift(&[4.0f32], &[0.0], &[0.25]).unwrap(), vec![1.0]);
        assert!(token_shift(&x, &[0.0f32], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn zero_state_write_then_read() {
        let s = Matrix::<f64>::zeros(2, 2);
        let (y, next) =
            wkv_step(&s, &[1.0, 1.0], &[1.0, 0.0], &[2.0, 3.0], &[0.0, 0.0], &[1.0, 0.0])
                .unwrap();
        assert_eq!(next.as_slice(), &[2.0, 0.0, 3.0, 0.0]);
        assert_eq!(y, vec![2.0, 3.0]);
    }

    #[test]
    fn pure_read_leaves_state() {
        let mut rng = SeededRng::new(3);
        let s = Matrix::from_vec(3, 3, (0..9).map(|_| rng.normal()).collect()).unwrap();
        let k = [0.3, -0.2, 0.9];
        let r = [0.5, 1.0, -1.5];
        let (y, next) = wkv_step(&s, &[1.0; 3], &k, &[0.0; 3], &[0.0; 3], &r).unwrap();
        assert_eq!(next, s);
        for i in 0..3 {
            let want: f64 = (0..3).map(|j| s.get(i, j) * r[j]).sum();
            assert!((y[i] - want).abs() < 1e-12);
        }
    }

    /// Materializes `diag(w) − κ̂(a⊙κ̂)ᵀ` explicitly in f64.
    fn explicit_step(
        s: &[Vec<f64>],
        w: &[f64],
        k: &[f64],
        v: &[f64],
        a: &[f64],
        r: &[f64],
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = w.len();
        let norm = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        let kh: Vec<f64> = k.iter().map(|x| x / (norm + 1e-6)).collect();
        let mut m = vec![vec![0.0; n]; n];
        for l in 0..n {
            for j in 0..n {
                m[l][j] = if l == j { w[j] } else { 0.0 } - kh[l] * a[j] * kh[j];
            }
        }
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = v[i] * k[j];
                for l in 0..n {
                    acc += s[i][l] * m[l][j];
                }
                next[i][j] = acc;
            }
        }
        let y = (0..n)
            .map(|i| (0..n).map(|j| next[i][j] * r[j]).sum())
            .collect();
        (y, next)
    }

    #[test]
    fn matches_explicit_transition_oracle() {
        let mut rng = SeededRng::new(2024);
        let n = 4;
        let mut state = Matrix::<f32>::zeros(n, n);
        let mut oracle = vec![vec![0.0f64; n]; n];
        for _ in 0..3 {
            let mut draw = |lo: f64, hi: f64| -> Vec<f32> {
                (0..n).map(|_| rng.uniform_range(lo, hi) as f32).collect()
            };
            let w = draw(0.5, 0.99);
            let k = draw(-1.0, 1.0);
            let v = draw(-1.0, 1.0);
            let a = draw(0.0, 1.0);
            let r = draw(-1.0, 1.0);
            let (y, next) = wkv_step(&state, &w, &k, &v, &a, &r).unwrap();
            let wide = |x: &[f32]| x.iter().map(|&t| t as f64).collect::<Vec<_>>();
            let (y_ref, s_ref) =
                explicit_step(&oracle, &wide(&w), &wide(&k), &wide(&v), &wide(&a), &wide(&r));
            for i in 0..n {
                assert!((y[i] as f64 - y_ref[i]).abs() < 1e-5);
                for j in 0..n {
                    assert!((next.get(i, j) as f64 - s_ref[i][j]).abs() < 1e-5);
                }
            }
            state = next;
            oracle = s_ref;
        }
    }

    #[test]
    fn rejects_out_of_range_gates() {
        let s = Matrix::<f32>::zeros(2, 2);
        let ok = [0.5f32, 0.5];
        assert!(matches!(
            wkv_step(&s, &[1.5, 0.5], &ok, &ok, &ok, &ok),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            wkv_step(&s, &[0.0, 0.5], &ok, &ok, &ok, &ok),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            wkv_step(&s, &ok, &ok, &ok, &[-0.1, 0.5], &ok),
            Err(Error::Parameter(_))
        ));
        assert!(wkv_step(&s, &ok, &ok, &ok, &[0.5], &ok).is_err());
    }

    #[test]
    fn derived_gates_stay_open_in_single_precision() {
        let mut rng = SeededRng::new(5);
        for _ in 0..20_000 {
            let x = rng.normal() * 10f64.powf(rng.uniform_range(-2.0, 6.0));
            let w = decay_from_raw(x) as f32;
            let a = rate_from_raw(x) as f32;
            assert!(w > 0.0 && w < 1.0, "w={w} at {x}");
            assert!(a > 0.0 && a < 1.0, "a={a} at {x}");
        }
        for x in [f64::MAX, -f64::MAX, 0.0] {
            let w = decay_from_raw(x) as f32;
            let a = rate_from_raw(x) as f32;
            assert!(w > 0.0 && w < 1.0 && a > 0.0 && a < 1.0);
        }
    }

    #[test]
    fn decay_contracts_without_writes() {
        let mut rng = SeededRng::new(99);
        let n = 5;
        for _ in 0..200 {
            let s = Matrix::from_vec(n, n, (0..n * n).map(|_| rng.normal()).collect()).unwrap();
            let w: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.01, 1.0)).collect();
            let k: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let (_, next) = wkv_step(&s, &w, &k, &vec![0.0; n], &vec![0.0; n], &r).unwrap();
            let wmax = w.iter().cloned().fold(0.0, f64::max);
            assert!(next.frobenius() <= s.frobenius() * wmax + 1e-12);
        }
    }
}
