//! Neumann-series solves at a fixed wave number.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use log::warn;
use num_complex::Complex64;

use super::{check_unit, IncidentConfig, SolverSettings};
use crate::domain::{scale3, FieldOnGrid, GridSpec, MediumScene, PlaneWave};
use crate::error::{Error, Result};
use crate::greens::{estimate_contraction, ConvolutionKernel, ContractionReport, ResolventOperator, WaveNumber};
use crate::noise::NoiseRealization;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A scene with fixed solver settings; hands out per-wave-number solvers.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    scene: MediumScene,
    settings: SolverSettings,
    scene_hash: String,
    window: Arc<Window>,
}

/// Bounding box of the scene support, where every far-field iterate lives.
#[derive(Debug)]
struct Window {
    lo: [usize; 3],
    dims: [usize; 3],
    /// Grid index of each window voxel, in window (x-fastest) order.
    indices: Vec<usize>,
    potential: Vec<f64>,
    sigma: Vec<f64>,
    source: Vec<f64>,
}

impl Window {
    fn new(scene: &MediumScene, extra: Option<&[bool]>) -> Self {
        let grid = scene.grid();
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, &m) in scene.support_mask().iter().enumerate() {
            if m || extra.is_some_and(|e| e[i]) {
                any = true;
                let c = grid.coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
        if !any {
            return Window {
                lo: [0; 3],
                dims: [0; 3],
                indices: Vec::new(),
                potential: Vec::new(),
                sigma: Vec::new(),
                source: Vec::new(),
            };
        }
        let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
        let mut indices = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for c in lo[2]..=hi[2] {
            for b in lo[1]..=hi[1] {
                for a in lo[0]..=hi[0] {
                    indices.push(grid.index(a, b, c));
                }
            }
        }
        let gather = |vals: &[f64]| indices.iter().map(|&i| vals[i]).collect::<Vec<f64>>();
        Window {
            lo,
            dims,
            potential: gather(scene.potential()),
            sigma: gather(scene.sigma()),
            source: gather(scene.source()),
            indices,
        }
    }

    fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Plane wave `e^{sign·i p·x}` at the window voxels.
    fn wave(&self, grid: &GridSpec, p: [f64; 3], outgoing: bool) -> Vec<Complex64> {
        let w = if outgoing { PlaneWave::outgoing(grid, p) } else { PlaneWave::incoming(grid, p) };
        let [d0, d1, d2] = self.dims;
        let mut out = Vec::with_capacity(self.indices.len());
        for c in 0..d2 {
            for b in 0..d1 {
                for a in 0..d0 {
                    out.push(w.at([self.lo[0] + a, self.lo[1] + b, self.lo[2] + c]));
                }
            }
        }
        out
    }
}

impl ForwardModel {
    pub fn new(scene: MediumScene, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        let scene_hash = scene.digest();
        let window = Arc::new(Window::new(&scene, None));
        Ok(ForwardModel { scene, settings, scene_hash, window })
    }

    /// Like [`ForwardModel::new`], with the working window enlarged to cover
    /// `extra` so that probes can be paired with densities supported there.
    pub fn with_window_mask(scene: MediumScene, settings: SolverSettings, extra: &[bool]) -> Result<Self> {
        settings.validate()?;
        if extra.len() != scene.grid().len() {
            return Err(Error::GridMismatch("window mask does not match the scene grid".into()));
        }
        let scene_hash = scene.digest();
        let window = Arc::new(Window::new(&scene, Some(extra)));
        Ok(ForwardModel { scene, settings, scene_hash, window })
    }

    pub fn scene(&self) -> &MediumScene {
        &self.scene
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn scene_hash(&self) -> &str {
        &self.scene_hash
    }

    /// Prepares the solver for `k`, refusing wave numbers at which the
    /// contraction estimate of `R_k V` is not below one.
    pub fn at(&self, k: WaveNumber) -> Result<WaveSolver<'_>> {
        let solver = WaveSolver {
            model: self,
            k,
            resolvent: OnceLock::new(),
            window_kernel: OnceLock::new(),
            contraction: OnceLock::new(),
        };
        let report = solver.contraction();
        if !report.converged {
            return Err(Error::BelowThreshold { k: k.get(), norm: report.norm_estimate });
        }
        if !solver.resolution_ok() {
            warn!(
                "k = {} with voxel size {:.4} gives kh = {:.2} > 1; the phase is under-resolved",
                k,
                self.scene.grid().max_spacing(),
                k.get() * self.scene.grid().max_spacing()
            );
        }
        Ok(solver)
    }

    fn check_noise(&self, noise: Option<&NoiseRealization>) -> Result<()> {
        match noise {
            Some(n) if n.grid() != self.scene.grid() => {
                Err(Error::GridMismatch("noise realization does not match the scene grid".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Output of [`solve_mild`].
#[derive(Debug, Clone)]
pub struct ForwardSolveResult {
    pub u_sc: FieldOnGrid,
    pub series_terms: usize,
    /// Relative size of the last series update.
    pub residual: f64,
    pub contraction: ContractionReport,
    /// `k h ≤ 1`.
    pub resolution_ok: bool,
}

/// A far-field value with its series diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldValue {
    pub value: Complex64,
    pub series_terms: usize,
    pub residual: f64,
}

/// `w = Σ_j (R V)^j e^{-ik x̂·(·)}` on the support window. By symmetry of
/// `R`, `u∞(x̂) = (1/4π) Σ_y w(y) g(y) h³` for any right-hand side `g`, so one
/// probe serves every incident direction and every noise realization.
#[derive(Debug, Clone)]
pub struct ProbeSolution {
    pub k: f64,
    pub xhat: [f64; 3],
    pub series_terms: usize,
    pub residual: f64,
    values: Vec<Complex64>,
    window: Arc<Window>,
    voxel_volume: f64,
}

impl ProbeSolution {
    /// `Σ_y w(y) ρ(y) h³` for a density `ρ` given on the full grid.
    pub fn pairing(&self, density: &[Complex64]) -> Complex64 {
        self.values.iter().zip(&self.window.indices).map(|(w, &i)| w * density[i]).sum::<Complex64>()
            * self.voxel_volume
    }

    /// `Σ_y w(y) ρ(y) h³` for a real density on the full grid.
    pub fn pairing_real(&self, density: &[f64]) -> Complex64 {
        self.values.iter().zip(&self.window.indices).map(|(w, &i)| w * density[i]).sum::<Complex64>()
            * self.voxel_volume
    }

    /// `Σ_y w(y) σ(y) W(y)`: the noise contribution before the `-1/4π`.
    pub fn noise_pairing(&self, noise: &NoiseRealization) -> Complex64 {
        let w = noise.values();
        self.values
            .iter()
            .zip(&self.window.indices)
            .zip(&self.window.sigma)
            .map(|((p, &i), &s)| p * (s * w[i]))
            .sum()
    }

    /// Grid indices and probe values on the support window.
    pub fn window_values(&self) -> (&[usize], &[Complex64]) {
        (&self.window.indices, &self.values)
    }
}

/// Solver at one wave number. Kernels and the contraction estimate are built
/// lazily and shared by every solve at this `k`.
pub struct WaveSolver<'a> {
    model: &'a ForwardModel,
    k: WaveNumber,
    resolvent: OnceLock<ResolventOperator>,
    window_kernel: OnceLock<ConvolutionKernel>,
    contraction: OnceLock<ContractionReport>,
}

impl<'a> WaveSolver<'a> {
    pub fn k(&self) -> WaveNumber {
        self.k
    }

    pub fn model(&self) -> &'a ForwardModel {
        self.model
    }

    fn scene(&self) -> &'a MediumScene {
        &self.model.scene
    }

    fn grid(&self) -> &'a GridSpec {
        self.model.scene.grid()
    }

    fn settings(&self) -> &'a SolverSettings {
        &self.model.settings
    }

    pub fn resolvent(&self) -> &ResolventOperator {
        self.resolvent
            .get_or_init(|| ResolventOperator::new(*self.grid(), self.k, self.settings().method))
    }

    fn window_kernel(&self) -> &ConvolutionKernel {
        self.window_kernel.get_or_init(|| {
            ConvolutionKernel::new(self.model.window.dims, self.grid().spacing(), self.k.get(), self.settings().method)
        })
    }

    pub fn contraction(&self) -> ContractionReport {
        *self.contraction.get_or_init(|| {
            if !self.scene().has_potential() {
                return ContractionReport { k: self.k.get(), norm_estimate: 0.0, iterations: 0, converged: true };
            }
            let s = self.settings();
            estimate_contraction(self.resolvent(), self.scene().potential(), s.contraction_trials, s.contraction_seed)
        })
    }

    pub fn resolution_ok(&self) -> bool {
        self.k.get() * self.grid().max_spacing() <= 1.0
    }

    /// `αVu^i - f` on the support window.
    fn deterministic_density(&self, inc: &IncidentConfig) -> Vec<Complex64> {
        let win = &self.model.window;
        let mut g: Vec<Complex64> = win.source.iter().map(|&f| Complex64::new(-f, 0.0)).collect();
        if let Some(d) = inc.direction() {
            let ui = win.wave(self.grid(), scale3(d, self.k.get()), false);
            for ((g, u), &v) in g.iter_mut().zip(&ui).zip(&win.potential) {
                *g += u * v;
            }
        }
        g
    }

    /// `σW/h³` on the support window.
    fn noise_density(&self, noise: &NoiseRealization) -> Vec<Complex64> {
        let win = &self.model.window;
        let inv = 1.0 / self.grid().voxel_volume();
        let w = noise.values();
        win.indices
            .iter()
            .zip(&win.sigma)
            .map(|(&i, &s)| Complex64::new(s * w[i] * inv, 0.0))
            .collect()
    }

    /// Sums `Σ_{j≥1} (step)^j start` until the relative update drops below
    /// `tol` or the term budget is exhausted. Returns the tail, the number of
    /// terms counting `start` itself, and the last relative update.
    fn neumann_tail(
        &self,
        start: &[Complex64],
        step: impl Fn(&[Complex64]) -> Vec<Complex64>,
        norm: impl Fn(&[Complex64]) -> f64,
    ) -> Result<(Vec<Complex64>, usize, f64)> {
        let settings = self.settings();
        let mut tail = vec![ZERO; start.len()];
        let mut total: Vec<Complex64> = start.to_vec();
        if !self.scene().has_potential() || norm(start) == 0.0 {
            return Ok((tail, 1, 0.0));
        }
        let mut term = step(start);
        let mut terms = 1;
        loop {
            terms += 1;
            for ((t, s), v) in tail.iter_mut().zip(total.iter_mut()).zip(&term) {
                *t += v;
                *s += v;
            }
            let rel = norm(&term) / norm(&total);
            if rel < settings.tol {
                return Ok((tail, terms, rel));
            }
            if terms >= settings.max_terms {
                return Err(Error::Truncation { terms, residual: rel, tol: settings.tol });
            }
            term = step(&term);
        }
    }

    fn window_norm(v: &[Complex64]) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `φ ↦ V·R(φ)` on the window.
    fn v_after_r(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = self.window_kernel().apply(x);
        for (v, &p) in y.iter_mut().zip(&self.model.window.potential) {
            *v *= p;
        }
        y
    }

    /// `φ ↦ R(V·φ)` on the window.
    fn r_after_v(&self, x: &[Complex64]) -> Vec<Complex64> {
        let vx: Vec<Complex64> = x.iter().zip(&self.model.window.potential).map(|(v, &p)| v * p).collect();
        self.window_kernel().apply(&vx)
    }

    /// `u∞(x̂)` from the adjoint-form series `Σ_j (V R)^j`.
    pub fn far_field(
        &self,
        xhat: [f64; 3],
        inc: &IncidentConfig,
        noise: Option<&NoiseRealization>,
    ) -> Result<FarFieldValue> {
        check_unit(xhat, "observation direction")?;
        self.model.check_noise(noise)?;
        let win = &self.model.window;
        if win.is_empty() {
            return Ok(FarFieldValue { value: ZERO, series_terms: 1, residual: 0.0 });
        }
        let vol = self.grid().voxel_volume();
        let e = win.wave(self.grid(), scale3(xhat, self.k.get()), true);
        let mut g = self.deterministic_density(inc);
        let mut j0: Complex64 = e.iter().zip(&g).map(|(a, b)| a * b).sum::<Complex64>() * vol;
        if let Some(noise) = noise {
            let w = noise.values();
            let pair: Complex64 = e
                .iter()
                .zip(&win.indices)
                .zip(&win.sigma)
                .map(|((a, &i), &s)| a * (s * w[i]))
                .sum();
            j0 -= pair;
            for (gv, s) in g.iter_mut().zip(self.noise_density(noise)) {
                *gv -= s;
            }
        }
        let (tail, terms, residual) = self.neumann_tail(&g, |x| self.v_after_r(x), Self::window_norm)?;
        let tail_sum: Complex64 = e.iter().zip(&tail).map(|(a, b)| a * b).sum::<Complex64>() * vol;
        Ok(FarFieldValue { value: (j0 + tail_sum) / (4.0 * PI), series_terms: terms, residual })
    }

    /// The probe `w = Σ_j (R V)^j e^{-ik x̂·(·)}` for one observation direction.
    pub fn probe(&self, xhat: [f64; 3]) -> Result<ProbeSolution> {
        check_unit(xhat, "observation direction")?;
        let win = &self.model.window;
        let e = win.wave(self.grid(), scale3(xhat, self.k.get()), true);
        let (tail, terms, residual) = if win.is_empty() {
            (vec![ZERO; 0], 1, 0.0)
        } else {
            self.neumann_tail(&e, |x| self.r_after_v(x), Self::window_norm)?
        };
        let values = e.iter().zip(&tail).map(|(a, b)| a + b).collect();
        Ok(ProbeSolution {
            k: self.k.get(),
            xhat,
            series_terms: terms,
            residual,
            values,
            window: Arc::clone(win),
            voxel_volume: self.grid().voxel_volume(),
        })
    }

    /// `u∞` assembled from a probe of this solver.
    pub fn far_field_from_probe(
        &self,
        probe: &ProbeSolution,
        inc: &IncidentConfig,
        noise: Option<&NoiseRealization>,
    ) -> Result<FarFieldValue> {
        self.model.check_noise(noise)?;
        if probe.k != self.k.get() {
            return Err(Error::InvalidArgument(format!("probe built at k = {}, solver at k = {}", probe.k, self.k)));
        }
        let vol = self.grid().voxel_volume();
        let g = self.deterministic_density(inc);
        let mut value = probe.values.iter().zip(&g).map(|(a, b)| a * b).sum::<Complex64>() * vol;
        if let Some(noise) = noise {
            value -= probe.noise_pairing(noise);
        }
        Ok(FarFieldValue { value: value / (4.0 * PI), series_terms: probe.series_terms, residual: probe.residual })
    }

    /// `(F₀, F₁)`: `F₀ = Σ e^{-ikx̂·y} σW` and
    /// `F₁ = Σ_{j=1..jmax} Σ e^{-ikx̂·y} (V R)^j (σW/h³) h³`.
    pub fn born_components(&self, xhat: [f64; 3], noise: &NoiseRealization, jmax: usize) -> Result<(Complex64, Complex64)> {
        check_unit(xhat, "observation direction")?;
        self.model.check_noise(Some(noise))?;
        let win = &self.model.window;
        if win.is_empty() {
            return Ok((ZERO, ZERO));
        }
        let vol = self.grid().voxel_volume();
        let e = win.wave(self.grid(), scale3(xhat, self.k.get()), true);
        let s = self.noise_density(noise);
        let f0 = e.iter().zip(&s).map(|(a, b)| a * b).sum::<Complex64>() * vol;
        let mut f1 = ZERO;
        if self.scene().has_potential() {
            let mut term = s;
            for _ in 0..jmax {
                term = self.v_after_r(&term);
                f1 += e.iter().zip(&term).map(|(a, b)| a * b).sum::<Complex64>() * vol;
            }
        }
        Ok((f0, f1))
    }

    /// Full-grid density `αVu^i - f - σW/h³`.
    fn grid_density(&self, inc: &IncidentConfig, noise: Option<&NoiseRealization>) -> Vec<Complex64> {
        let scene = self.scene();
        let grid = self.grid();
        let mut g: Vec<Complex64> = scene.source().iter().map(|&f| Complex64::new(-f, 0.0)).collect();
        if let Some(d) = inc.direction() {
            let ui = PlaneWave::incoming(grid, scale3(d, self.k.get()));
            for (i, gv) in g.iter_mut().enumerate() {
                let v = scene.potential()[i];
                if v != 0.0 {
                    *gv += ui.at(grid.coords(i)) * v;
                }
            }
        }
        if let Some(noise) = noise {
            let inv = 1.0 / grid.voxel_volume();
            for ((gv, &s), &w) in g.iter_mut().zip(scene.sigma()).zip(noise.values()) {
                *gv -= s * w * inv;
            }
        }
        g
    }

    /// `u^sc = Σ_j (R V)^j (αR V u^i - R f - R(σḂ))` on the whole grid.
    pub fn solve_mild(&self, inc: &IncidentConfig, noise: Option<&NoiseRealization>) -> Result<ForwardSolveResult> {
        self.model.check_noise(noise)?;
        let grid = self.grid();
        let r = self.resolvent();
        let rhs = r.apply_values(&self.grid_density(inc, noise));
        let domain = grid.domain_mask();
        let norm = |v: &[Complex64]| {
            v.iter().zip(&domain).filter(|(_, &d)| d).map(|(z, _)| z.norm_sqr()).sum::<f64>().sqrt()
        };
        let potential = self.scene().potential();
        let step = |x: &[Complex64]| {
            let vx: Vec<Complex64> = x.iter().zip(potential).map(|(v, &p)| v * p).collect();
            r.apply_values(&vx)
        };
        let (tail, terms, residual) = self.neumann_tail(&rhs, step, norm)?;
        let u: Vec<Complex64> = rhs.iter().zip(&tail).map(|(a, b)| a + b).collect();
        Ok(ForwardSolveResult {
            u_sc: FieldOnGrid::from_complex(*grid, u)?,
            series_terms: terms,
            residual,
            contraction: self.contraction(),
            resolution_ok: self.resolution_ok(),
        })
    }

    /// `u^sc(x)` at arbitrary points off the support, from the volume
    /// representation `u^sc = R(V(u^sc + αu^i) - f - σḂ)` with point values of
    /// the kernel.
    pub fn scattered_field_at(
        &self,
        points: &[[f64; 3]],
        inc: &IncidentConfig,
        noise: Option<&NoiseRealization>,
    ) -> Result<Vec<Complex64>> {
        let solve = self.solve_mild(inc, noise)?;
        let scene = self.scene();
        let grid = self.grid();
        let mut density = self.grid_density(inc, noise);
        for (i, d) in density.iter_mut().enumerate() {
            let v = scene.potential()[i];
            if v != 0.0 {
                *d += solve.u_sc.values()[i] * v;
            }
        }
        let vol = grid.voxel_volume();
        let sources: Vec<([f64; 3], Complex64)> = density
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != ZERO)
            .map(|(i, d)| (grid.point(i), *d * vol))
            .collect();
        let k = self.k.get();
        points
            .iter()
            .map(|x| {
                let mut acc = ZERO;
                for (y, q) in &sources {
                    let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
                    acc += crate::greens::green_eval(k, r)? * q;
                }
                Ok(acc)
            })
            .collect()
    }
}

fn model_with_tol(scene: &MediumScene, tol: f64, max_terms: usize) -> Result<ForwardModel> {
    let settings = SolverSettings { tol, max_terms, ..SolverSettings::default() };
    ForwardModel::new(scene.clone(), settings)
}

/// One-shot [`WaveSolver::solve_mild`].
pub fn solve_mild(
    scene: &MediumScene,
    k: WaveNumber,
    inc: &IncidentConfig,
    noise: Option<&NoiseRealization>,
    tol: f64,
    max_terms: usize,
) -> Result<ForwardSolveResult> {
    model_with_tol(scene, tol, max_terms)?.at(k)?.solve_mild(inc, noise)
}

/// One-shot [`WaveSolver::far_field`].
pub fn far_field(
    scene: &MediumScene,
    k: WaveNumber,
    xhat: [f64; 3],
    inc: &IncidentConfig,
    noise: Option<&NoiseRealization>,
    tol: f64,
) -> Result<Complex64> {
    let model = model_with_tol(scene, tol, SolverSettings::default().max_terms)?;
    Ok(model.at(k)?.far_field(xhat, inc, noise)?.value)
}

/// One-shot [`WaveSolver::born_components`].
pub fn born_components(
    scene: &MediumScene,
    k: WaveNumber,
    xhat: [f64; 3],
    noise: &NoiseRealization,
    jmax: usize,
) -> Result<(Complex64, Complex64)> {
    let model = ForwardModel::new(scene.clone(), SolverSettings::default())?;
    model.at(k)?.born_components(xhat, noise, jmax)
}
