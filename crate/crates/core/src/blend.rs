//! Gradient-domain blending and mask compositing.
//!
//! [`poisson_solve`] finds `f` minimizing `‖∇f − ∇g‖²` inside a mask with
//! `f = I_t` outside it. For each masked pixel `p` the 5-point system is
//!
//! ```text
//! 4 f_p − Σ_{q ∈ N4(p), masked} f_q = Σ_{q unmasked} I_t(q) + 4 g_p − Σ_q g_q
//! ```
//!
//! Neighbours outside the frame take the value of `p` itself for both `I_t`
//! and `g`. The matrix is symmetric positive definite, so preconditioned
//! conjugate gradients converge.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imageops::sample_bilinear;
use crate::scalar::Real;
use crate::types::{BoundingBox, ImageBuffer};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 20_000;
pub const DEFAULT_ERODE_WIDTH: f64 = 7.0;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct PoissonProblem<'a, T: Real> {
    pub target: &'a ImageBuffer<T>,
    pub guidance: &'a ImageBuffer<T>,
    /// One channel, values in `{0, 1}`.
    pub mask: &'a ImageBuffer<T>,
    /// Relative residual `‖b − A f‖ / ‖b‖` to reach.
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<'a, T: Real> PoissonProblem<'a, T> {
    pub fn new(target: &'a ImageBuffer<T>, guidance: &'a ImageBuffer<T>, mask: &'a ImageBuffer<T>) -> Self {
        PoissonProblem {
            target,
            guidance,
            mask,
            tolerance: T::lit(DEFAULT_TOLERANCE),
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.target.same_extent(self.guidance) {
            return Err(Error::shape(
                format!("{:?}", self.target.extent()),
                format!("{:?}", self.guidance.extent()),
            ));
        }
        let (w, h, _) = self.target.extent();
        if self.mask.extent() != (w, h, 1) {
            return Err(Error::shape(
                format!("({w}, {h}, 1)"),
                format!("{:?}", self.mask.extent()),
            ));
        }
        check_binary(self.mask)?;
        if !(self.tolerance > T::zero()) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        Ok(())
    }
}

fn check_binary<T: Real>(mask: &ImageBuffer<T>) -> Result<()> {
    if mask.data().iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(Error::invalid("mask must be binary"));
    }
    Ok(())
}

/// Sparse form of the masked 5-point system.
#[derive(Debug, Clone)]
pub struct PoissonSystem {
    /// `(x, y)` of each unknown, row-major order.
    pub unknowns: Vec<(usize, usize)>,
    /// Masked in-frame neighbours of each unknown (`u32::MAX` when absent).
    neighbors: Vec<[u32; 4]>,
}

impl PoissonSystem {
    pub fn new<T: Real>(mask: &ImageBuffer<T>) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let mut index = vec![NONE; w * h];
        let mut unknowns = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y, 0) != T::zero() {
                    index[y * w + x] = unknowns.len() as u32;
                    unknowns.push((x, y));
                }
            }
        }
        let neighbors = unknowns
            .iter()
            .map(|&(x, y)| {
                let at = |xx: isize, yy: isize| {
                    if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                        NONE
                    } else {
                        index[yy as usize * w + xx as usize]
                    }
                };
                let (x, y) = (x as isize, y as isize);
                [at(x - 1, y), at(x + 1, y), at(x, y - 1), at(x, y + 1)]
            })
            .collect();
        PoissonSystem { unknowns, neighbors }
    }

    pub fn len(&self) -> usize {
        self.unknowns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unknowns.is_empty()
    }

    /// Right-hand side for channel `c`.
    pub fn rhs<T: Real>(
        &self,
        target: &ImageBuffer<T>,
        guidance: &ImageBuffer<T>,
        mask: &ImageBuffer<T>,
        c: usize,
    ) -> Vec<T> {
        let (w, h) = (target.width() as isize, target.height() as isize);
        self.unknowns
            .iter()
            .map(|&(x, y)| {
                let (gp, tp) = (guidance.get(x, y, c), target.get(x, y, c));
                let mut fixed = T::zero();
                let mut lap = T::lit(4.0) * gp;
                for (dx, dy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    if xx < 0 || yy < 0 || xx >= w || yy >= h {
                        fixed += tp;
                        lap -= gp;
                    } else {
                        let (xx, yy) = (xx as usize, yy as usize);
                        lap -= guidance.get(xx, yy, c);
                        if mask.get(xx, yy, 0) == T::zero() {
                            fixed += target.get(xx, yy, c);
                        }
                    }
                }
                fixed + lap
            })
            .collect()
    }

    /// `out = A x`.
    pub fn apply<T: Real>(&self, x: &[T], out: &mut [T]) {
        let four = T::lit(4.0);
        for (i, nb) in self.neighbors.iter().enumerate() {
            let mut v = four * x[i];
            for &n in nb {
                if n != NONE {
                    v -= x[n as usize];
                }
            }
            out[i] = v;
        }
    }

    /// `‖b − A x‖ / ‖b‖`, or `‖A x‖` when `b = 0`.
    pub fn relative_residual<T: Real>(&self, x: &[T], b: &[T]) -> T {
        let mut ax = vec![T::zero(); x.len()];
        self.apply(x, &mut ax);
        let r = norm(&ax.iter().zip(b).map(|(&a, &b)| b - a).collect::<Vec<_>>());
        let nb = norm(b);
        if nb > T::zero() {
            r / nb
        } else {
            r
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub iterations: usize,
    /// Final relative residual, recomputed from scratch.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct PoissonSolution<T: Real> {
    pub image: ImageBuffer<T>,
    pub channels: Vec<ChannelStats>,
    /// Masked samples that fell outside `[0, 1]` before clamping.
    pub clamped: usize,
    /// Largest distance clamped away.
    pub max_clamp: f64,
}

/// Jacobi-preconditioned conjugate gradients from `x`. The diagonal is
/// the constant 4. Restarts from the true residual until it meets `tol`.
fn pcg<T: Real>(sys: &PoissonSystem, b: &[T], x: &mut [T], tol: T, max_iter: usize) -> Result<ChannelStats> {
    let n = b.len();
    let nb = norm(b);
    if nb == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(ChannelStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag = T::lit(0.25);
    let goal = tol * nb;
    let mut iterations = 0;
    let mut ap = vec![T::zero(); n];
    loop {
        sys.apply(x, &mut ap);
        let mut r: Vec<T> = b.iter().zip(&ap).map(|(&b, &a)| b - a).collect();
        let true_res = norm(&r);
        if true_res <= goal {
            return Ok(ChannelStats {
                iterations,
                residual: (true_res / nb).as_f64(),
            });
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: (true_res / nb).as_f64(),
            });
        }
        let mut z: Vec<T> = r.iter().map(|&v| v * inv_diag).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        // aim a little below the goal so the recomputed residual passes
        let inner_goal = goal * T::lit(0.5);
        while iterations < max_iter {
            sys.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            if norm(&r) <= inner_goal {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag;
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Solves the masked Poisson problem channel by channel, starting from the
/// guidance. The result is clamped to `[0, 1]` after convergence.
pub fn poisson_solve<T: Real>(problem: &PoissonProblem<'_, T>) -> Result<PoissonSolution<T>> {
    problem.validate()?;
    let sys = PoissonSystem::new(problem.mask);
    let (w, h, ch) = problem.target.extent();
    if sys.is_empty() {
        return Ok(PoissonSolution {
            image: problem.target.clone(),
            channels: vec![
                ChannelStats {
                    iterations: 0,
                    residual: 0.0
                };
                ch
            ],
            clamped: 0,
            max_clamp: 0.0,
        });
    }
    let solved: Vec<(Vec<T>, ChannelStats)> = (0..ch)
        .into_par_iter()
        .map(|c| {
            let b = sys.rhs(problem.target, problem.guidance, problem.mask, c);
            let mut x: Vec<T> = sys
                .unknowns
                .iter()
                .map(|&(px, py)| problem.guidance.get(px, py, c))
                .collect();
            let stats = pcg(&sys, &b, &mut x, problem.tolerance, problem.max_iterations)?;
            Ok((x, stats))
        })
        .collect::<Result<_>>()?;

    let mut data = problem.target.data().to_vec();
    let (mut clamped, mut max_clamp) = (0, 0.0f64);
    let mut channels = Vec::with_capacity(ch);
    for (c, (x, stats)) in solved.into_iter().enumerate() {
        for (&(px, py), v) in sys.unknowns.iter().zip(x) {
            let cv = v.clamp_to(T::zero(), T::one());
            if cv != v {
                clamped += 1;
                max_clamp = max_clamp.max((v - cv).abs().as_f64());
            }
            data[(py * w + px) * ch + c] = cv;
        }
        channels.push(stats);
    }
    Ok(PoissonSolution {
        image: ImageBuffer::new(w, h, ch, data)?,
        channels,
        clamped,
        max_clamp,
    })
}

/// Exact squared Euclidean distance transform of a 1-d sampled function
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let first = f.iter().position(|v| v.is_finite());
    let Some(first) = first else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Distance in pixels from each pixel center to the nearest background
/// (`0`) pixel center; infinite when there is no background.
pub fn distance_to_background<T: Real>(mask: &ImageBuffer<T>) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let mut g: Vec<f64> = (0..w * h)
        .map(|i| {
            if mask.data()[i * mask.channels()] == T::zero() {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut col = vec![0.0; h];
    let mut tmp = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = g[y * w + x];
        }
        edt_1d(&col, &mut tmp);
        for y in 0..h {
            g[y * w + x] = tmp[y];
        }
    }
    let mut row = vec![0.0; w];
    for y in 0..h {
        edt_1d(&g[y * w..(y + 1) * w], &mut row);
        g[y * w..(y + 1) * w].copy_from_slice(&row);
    }
    g.into_iter().map(f64::sqrt).collect()
}

/// `clamp(d / width, 0, 1)` with `d` the distance to the nearest
/// background pixel. A width of zero returns the mask itself.
pub fn soft_erode<T: Real>(mask: &ImageBuffer<T>, width: T) -> Result<ImageBuffer<T>> {
    if mask.channels() != 1 {
        return Err(Error::shape(1, mask.channels()));
    }
    check_binary(mask)?;
    if !(width >= T::zero()) || !width.is_finite() {
        return Err(Error::invalid("erosion width must be finite and non-negative"));
    }
    if width == T::zero() {
        return Ok(mask.clone());
    }
    let d = distance_to_background(mask);
    let data = d
        .into_iter()
        .map(|d| (T::lit(d) / width).clamp_to(T::zero(), T::one()))
        .collect();
    ImageBuffer::new(mask.width(), mask.height(), 1, data)
}

/// `I_b · S + I_t · (1 − S)` per pixel.
pub fn composite<T: Real>(
    blended: &ImageBuffer<T>,
    target: &ImageBuffer<T>,
    soft: &ImageBuffer<T>,
) -> Result<ImageBuffer<T>> {
    if !blended.same_extent(target) {
        return Err(Error::shape(
            format!("{:?}", target.extent()),
            format!("{:?}", blended.extent()),
        ));
    }
    let (w, h, ch) = target.extent();
    if soft.extent() != (w, h, 1) {
        return Err(Error::shape(format!("({w}, {h}, 1)"), format!("{:?}", soft.extent())));
    }
    let mut data = Vec::with_capacity(w * h * ch);
    for (i, (b, t)) in blended
        .data()
        .chunks_exact(ch)
        .zip(target.data().chunks_exact(ch))
        .enumerate()
    {
        let s = soft.data()[i];
        data.extend(b.iter().zip(t).map(|(&b, &t)| b * s + t * (T::one() - s)));
    }
    Ok(ImageBuffer::from_raw_clamped(w, h, ch, data))
}

/// Resizes `crop` and `soft` bilinearly onto `bbox` and blends them into
/// `frame`. Only pixels whose centers lie inside the box are touched, and
/// pixels where the resized mask is zero keep their exact frame value.
pub fn paste_back<T: Real>(
    frame: &ImageBuffer<T>,
    crop: &ImageBuffer<T>,
    soft: &ImageBuffer<T>,
    bbox: &BoundingBox<T>,
) -> Result<ImageBuffer<T>> {
    let (fw, fh, ch) = frame.extent();
    let (x0, y0, x1, y1) = (bbox.x0(), bbox.y0(), bbox.x1(), bbox.y1());
    if x0 < T::zero() || y0 < T::zero() || x1 > T::from_usize_lossy(fw) || y1 > T::from_usize_lossy(fh) {
        return Err(Error::OutOfBounds {
            x: x0.as_f64(),
            y: y0.as_f64(),
            width: fw,
            height: fh,
        });
    }
    if crop.channels() != ch {
        return Err(Error::shape(ch, crop.channels()));
    }
    if soft.extent() != (crop.width(), crop.height(), 1) {
        return Err(Error::shape(
            format!("({}, {}, 1)", crop.width(), crop.height()),
            format!("{:?}", soft.extent()),
        ));
    }
    let half = T::lit(0.5);
    let sx = T::from_usize_lossy(crop.width()) / bbox.w;
    let sy = T::from_usize_lossy(crop.height()) / bbox.h;
    let first = |lo: T| (lo - half).ceil().max(T::zero()).to_usize().unwrap_or(0);
    let (cx0, cy0) = (first(x0), first(y0));
    let mut out = frame.clone();
    for y in cy0..fh {
        let py = T::from_usize_lossy(y) + half;
        if py >= y1 {
            break;
        }
        for x in cx0..fw {
            let px = T::from_usize_lossy(x) + half;
            if px >= x1 {
                break;
            }
            let (u, v) = ((px - x0) * sx, (py - y0) * sy);
            let m = sample_bilinear(soft, u, v, 0);
            if m == T::zero() {
                continue;
            }
            for c in 0..ch {
                let f = frame.get(x, y, c);
                out.set(x, y, c, f * (T::one() - m) + sample_bilinear(crop, u, v, c) * m);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> ImageBuffer<f64> {
        ImageBuffer::from_fn(w, h, 1, |x, y, _| f(x, y))
    }

    #[test]
    fn constant_guidance_zero_boundary() {
        let t = img(6, 6, |_, _| 0.0);
        let g = img(6, 6, |_, _| 0.7);
        let m = img(6, 6, |x, y| {
            if (1..5).contains(&x) && (1..5).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let s = poisson_solve(&PoissonProblem::new(&t, &g, &m)).unwrap();
        assert!(s.image.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn single_pixel_by_hand() {
        let t = img(3, 3, |x, y| 0.1 * (x + 3 * y) as f64 / 2.0);
        let g = img(3, 3, |x, y| {
            if x == 1 && y == 1 {
                0.6
            } else {
                ((x + 2 * y) % 3) as f64 / 10.0
            }
        });
        let m = img(3, 3, |x, y| if x == 1 && y == 1 { 1.0 } else { 0.0 });
        let s = poisson_solve(&PoissonProblem::new(&t, &g, &m)).unwrap();
        let nb = [(0, 1), (2, 1), (1, 0), (1, 2)];
        let st: f64 = nb.iter().map(|&(x, y)| t.get(x, y, 0)).sum();
        let sg: f64 = nb.iter().map(|&(x, y)| g.get(x, y, 0)).sum();
        let want = st / 4.0 + (g.get(1, 1, 0) - sg / 4.0);
        assert!((s.image.get(1, 1, 0) - want).abs() < 1e-12);
    }

    #[test]
    fn target_as_guidance_is_exact() {
        let t = ImageBuffer::from_fn(16, 12, 3, |x, y, c| ((x * 13 + y * 7 + c * 5) % 17) as f64 / 16.0);
        let m = img(16, 12, |x, y| {
            if (2..14).contains(&x) && (3..10).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let s = poisson_solve(&PoissonProblem::new(&t, &t, &m)).unwrap();
        assert_eq!(s.image, t);
    }

    #[test]
    fn empty_mask_returns_target() {
        let t = img(4, 4, |x, _| x as f64 / 4.0);
        let g = img(4, 4, |_, y| y as f64 / 4.0);
        let m = img(4, 4, |_, _| 0.0);
        assert_eq!(poisson_solve(&PoissonProblem::new(&t, &g, &m)).unwrap().image, t);
    }

    #[test]
    fn non_binary_mask_and_extent_mismatch_rejected() {
        let t = img(4, 4, |_, _| 0.0);
        let half = img(4, 4, |_, _| 0.5);
        assert!(poisson_solve(&PoissonProblem::new(&t, &t, &half)).is_err());
        let small = img(3, 4, |_, _| 0.0);
        assert!(poisson_solve(&PoissonProblem::new(&t, &small, &t)).is_err());
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let t = img(32, 32, |_, _| 0.0);
        let g = img(32, 32, |x, y| ((x * y) % 7) as f64 / 7.0);
        let m = img(
            32,
            32,
            |x, y| {
                if x > 0 && y > 0 && x < 31 && y < 31 {
                    1.0
                } else {
                    0.0
                }
            },
        );
        let p = PoissonProblem {
            max_iterations: 3,
            ..PoissonProblem::new(&t, &g, &m)
        };
        match poisson_solve(&p) {
            Err(Error::NoConvergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-8);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edt_matches_brute_force() {
        let m = img(23, 17, |x, y| {
            if (x * 31 + y * 17) % 11 == 0 || (x + y) % 13 == 0 {
                0.0
            } else {
                1.0
            }
        });
        let d = distance_to_background(&m);
        for y in 0..17 {
            for x in 0..23 {
                let mut best = f64::INFINITY;
                for yy in 0..17 {
                    for xx in 0..23 {
                        if m.get(xx, yy, 0) == 0.0 {
                            best = best.min(((x as f64 - xx as f64).powi(2) + (y as f64 - yy as f64).powi(2)).sqrt());
                        }
                    }
                }
                assert!((d[y * 23 + x] - best).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn soft_erode_examples() {
        let m = img(21, 21, |x, _| if x >= 5 { 1.0 } else { 0.0 });
        assert_eq!(soft_erode(&m, 0.0).unwrap(), m);
        let s = soft_erode(&m, 4.0).unwrap();
        // column 6 is two pixels from the last background column
        assert_eq!(s.get(6, 10, 0), 0.5);
        assert_eq!(s.get(15, 10, 0), 1.0);
        assert_eq!(s.get(2, 10, 0), 0.0);
        let wide = soft_erode(&m, 8.0).unwrap();
        assert!(wide.data().iter().zip(s.data()).all(|(a, b)| a <= b));
    }

    #[test]
    fn composite_endpoints() {
        let b = img(3, 3, |_, _| 1.0);
        let t = img(3, 3, |x, _| x as f64 / 3.0);
        assert_eq!(composite(&b, &t, &img(3, 3, |_, _| 0.0)).unwrap(), t);
        assert_eq!(composite(&b, &t, &img(3, 3, |_, _| 1.0)).unwrap(), b);
        let z = img(3, 3, |_, _| 0.0);
        let half = composite(&b, &z, &img(3, 3, |_, _| 0.5)).unwrap();
        assert!(half.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn paste_back_stays_in_box() {
        let frame = ImageBuffer::from_fn(40, 30, 3, |x, y, c| ((x + 2 * y + c) % 9) as f64 / 9.0);
        let crop = ImageBuffer::filled(16, 16, 3, 1.0);
        let soft = img(16, 16, |_, _| 1.0);
        let bbox = BoundingBox::new(20.0, 15.0, 12.0, 10.0).unwrap();
        let out = paste_back(&frame, &crop, &soft, &bbox).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                let inside = (14..26).contains(&x) && (10..20).contains(&y);
                for c in 0..3 {
                    if inside {
                        assert_eq!(out.get(x, y, c), 1.0);
                    } else {
                        assert_eq!(out.get(x, y, c), frame.get(x, y, c));
                    }
                }
            }
        }
        let outside = BoundingBox::new(38.0, 15.0, 12.0, 10.0).unwrap();
        assert!(paste_back(&frame, &crop, &soft, &outside).is_err());
    }
}
