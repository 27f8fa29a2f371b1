//! Scenario geometry and the field-response channel model.
//!
//! The channel from BS `n` to user `k` with the user's antenna at `r` is
//! `h = (fᵀ(r) Σ G)ᵀ`, where `f` holds one unit-modulus phase per receive
//! path, `G` one column of transmit-path phases per BS antenna, and `Σ`
//! the complex path-response coefficients. Only `f` depends on `r`, so
//! `Σ G` is cached per link.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::math::{CMatrix, Cx, Real};

/// Departure and arrival directions of the propagation paths on one link.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    pub tx_elevation: Vec<f64>,
    pub tx_azimuth: Vec<f64>,
    pub rx_elevation: Vec<f64>,
    pub rx_azimuth: Vec<f64>,
}

impl PathSet {
    pub fn n_tx(&self) -> usize {
        self.tx_elevation.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_elevation.len()
    }

    fn validate(&self) -> Result<()> {
        if self.n_tx() == 0 || self.n_rx() == 0 {
            return Err(CoreError::config("paths", "at least one path per side"));
        }
        if self.tx_azimuth.len() != self.n_tx() || self.rx_azimuth.len() != self.n_rx() {
            return Err(CoreError::Shape("elevation/azimuth count mismatch".into()));
        }
        let elev_ok = |v: &[f64]| v.iter().all(|a| a.abs() <= FRAC_PI_2 + 1e-12);
        let azim_ok = |v: &[f64]| v.iter().all(|a| a.abs() <= PI + 1e-12);
        if !(elev_ok(&self.tx_elevation)
            && elev_ok(&self.rx_elevation)
            && azim_ok(&self.tx_azimuth)
            && azim_ok(&self.rx_azimuth))
        {
            return Err(CoreError::config("paths", "angle out of range"));
        }
        Ok(())
    }
}

/// Scenario knobs used when sampling a realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    pub n_bs: usize,
    pub n_antennas: usize,
    pub n_users: usize,
    pub n_tx_paths: usize,
    pub n_rx_paths: usize,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Side length of the square mobility region, as a multiple of the wavelength.
    pub region_wavelengths: f64,
    /// Total noise power (W).
    pub noise_power: f64,
    pub path_loss_exp: f64,
    /// Path gain at the 1 m reference distance (linear).
    pub ref_gain: f64,
    pub bs_radius: f64,
    pub user_radius: f64,
    /// Only the diagonal of each path-response matrix is non-zero.
    pub diagonal_prm: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            n_bs: 2,
            n_antennas: 4,
            n_users: 4,
            n_tx_paths: 6,
            n_rx_paths: 6,
            wavelength: 0.01,
            region_wavelengths: 2.0,
            noise_power: dbm_to_watts(-100.0),
            path_loss_exp: 3.9,
            ref_gain: db_to_linear(-40.0),
            bs_radius: 100.0,
            user_radius: 40.0,
            diagonal_prm: false,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("n_bs", self.n_bs),
            ("n_antennas", self.n_antennas),
            ("n_users", self.n_users),
            ("n_tx_paths", self.n_tx_paths),
            ("n_rx_paths", self.n_rx_paths),
        ] {
            if v == 0 {
                return Err(CoreError::config(field, "must be at least 1"));
            }
        }
        for (field, v) in [
            ("wavelength", self.wavelength),
            ("region_wavelengths", self.region_wavelengths),
            ("noise_power", self.noise_power),
            ("ref_gain", self.ref_gain),
            ("bs_radius", self.bs_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::config(field, "must be positive and finite"));
            }
        }
        if !(self.user_radius >= 0.0 && self.user_radius.is_finite()) {
            return Err(CoreError::config("user_radius", "must be non-negative"));
        }
        if !self.path_loss_exp.is_finite() {
            return Err(CoreError::config("path_loss_exp", "must be finite"));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Everything needed to evaluate every link's channel at any antenna position.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioGeometry {
    pub n_bs: usize,
    pub n_antennas: usize,
    pub n_users: usize,
    pub bs_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    /// Indexed `n * n_users + k`.
    pub paths: Vec<PathSet>,
    /// Indexed `n * n_users + k`; shape `Q × L`.
    pub prm: Vec<CMatrix>,
    /// Indexed `n * n_antennas + i`.
    pub tx_antennas: Vec<[f64; 2]>,
    pub wavelength: f64,
    /// Half the side of the square mobility region (m).
    pub half_width: f64,
    pub noise_power: f64,
    pub path_loss_exp: f64,
    pub ref_gain: f64,
}

impl ScenarioGeometry {
    pub fn link(&self, n: usize, k: usize) -> usize {
        n * self.n_users + k
    }

    pub fn distance(&self, n: usize, k: usize) -> f64 {
        let b = self.bs_positions[n];
        let u = self.user_positions[k];
        ((b[0] - u[0]).powi(2) + (b[1] - u[1]).powi(2)).sqrt().max(1.0)
    }

    /// Per-entry variance of the path-response coefficients on a link.
    pub fn prm_variance(&self, n: usize, k: usize) -> f64 {
        let l = self.paths[self.link(n, k)].n_tx() as f64;
        self.ref_gain * self.distance(n, k).powf(-self.path_loss_exp) / l
    }

    fn validate(&self) -> Result<()> {
        if self.n_bs == 0 || self.n_antennas == 0 || self.n_users == 0 {
            return Err(CoreError::config("counts", "must be at least 1"));
        }
        if !(self.wavelength > 0.0) {
            return Err(CoreError::config("wavelength", "must be positive"));
        }
        let links = self.n_bs * self.n_users;
        if self.bs_positions.len() != self.n_bs
            || self.user_positions.len() != self.n_users
            || self.paths.len() != links
            || self.prm.len() != links
            || self.tx_antennas.len() != self.n_bs * self.n_antennas
        {
            return Err(CoreError::Shape("scenario tables do not match counts".into()));
        }
        for (paths, prm) in self.paths.iter().zip(&self.prm) {
            paths.validate()?;
            if prm.rows() != paths.n_rx() || prm.cols() != paths.n_tx() {
                return Err(CoreError::Shape(format!(
                    "path-response matrix is {}x{}, paths give {}x{}",
                    prm.rows(),
                    prm.cols(),
                    paths.n_rx(),
                    paths.n_tx()
                )));
            }
        }
        Ok(())
    }
}

/// A sampled scenario plus cached transmit field-response matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub geometry: ScenarioGeometry,
    /// Transmit FRM per link, `L × I`.
    pub tx_frm: Vec<CMatrix>,
    /// `Σ G` per link, `Q × I`.
    mixed: Vec<CMatrix>,
    /// Per link, per receive path: `(cos θ sin φ, sin θ)`.
    rx_dirs: Vec<Vec<[f64; 2]>>,
}

impl ChannelRealization {
    pub fn from_geometry(geometry: ScenarioGeometry) -> Result<Self> {
        geometry.validate()?;
        let lambda = geometry.wavelength;
        let mut tx_frm = Vec::with_capacity(geometry.paths.len());
        let mut mixed = Vec::with_capacity(geometry.paths.len());
        let mut rx_dirs = Vec::with_capacity(geometry.paths.len());
        for n in 0..geometry.n_bs {
            for k in 0..geometry.n_users {
                let link = geometry.link(n, k);
                let paths = &geometry.paths[link];
                let mut g = CMatrix::zeros(paths.n_tx(), geometry.n_antennas);
                for i in 0..geometry.n_antennas {
                    let t = geometry.tx_antennas[n * geometry.n_antennas + i];
                    let col = transmit_frv(paths, t, lambda)?;
                    for m in 0..paths.n_tx() {
                        g.set(m, i, col.get(m, 0));
                    }
                }
                mixed.push(geometry.prm[link].matmul(&g)?);
                tx_frm.push(g);
                rx_dirs.push(
                    paths
                        .rx_elevation
                        .iter()
                        .zip(&paths.rx_azimuth)
                        .map(|(&el, &az)| direction(el, az))
                        .collect(),
                );
            }
        }
        Ok(ChannelRealization {
            geometry,
            tx_frm,
            mixed,
            rx_dirs,
        })
    }

    pub fn n_bs(&self) -> usize {
        self.geometry.n_bs
    }

    pub fn n_users(&self) -> usize {
        self.geometry.n_users
    }

    pub fn n_antennas(&self) -> usize {
        self.geometry.n_antennas
    }

    pub fn noise_power(&self) -> f64 {
        self.geometry.noise_power
    }

    pub fn half_width(&self) -> f64 {
        self.geometry.half_width
    }

    pub fn wavelength(&self) -> f64 {
        self.geometry.wavelength
    }

    /// `h_{n,k}(r)` over any [`Real`] scalar, so positions can be tape variables.
    pub fn channel_generic<S: Real>(&self, n: usize, k: usize, r: [S; 2]) -> Vec<Cx<S>> {
        let link = self.geometry.link(n, k);
        let m = &self.mixed[link];
        let wavenumber = 2.0 * PI / self.geometry.wavelength;
        let f: Vec<Cx<S>> = self.rx_dirs[link]
            .iter()
            .map(|&[a, b]| {
                let phase = (r[0] * a + r[1] * b) * wavenumber;
                Cx::new(phase.cos(), phase.sin())
            })
            .collect();
        (0..self.geometry.n_antennas)
            .map(|i| {
                let mut acc = f[0].mul_const(m.get(0, i));
                for (q, fq) in f.iter().enumerate().skip(1) {
                    acc = acc + fq.mul_const(m.get(q, i));
                }
                acc
            })
            .collect()
    }
}

fn direction(elevation: f64, azimuth: f64) -> [f64; 2] {
    [elevation.cos() * azimuth.sin(), elevation.sin()]
}

fn frv(elev: &[f64], azim: &[f64], pos: [f64; 2], lambda: f64) -> Result<CMatrix> {
    if !(lambda > 0.0) {
        return Err(CoreError::config("wavelength", "must be positive"));
    }
    let k0 = 2.0 * PI / lambda;
    Ok(CMatrix::column(
        elev.iter()
            .zip(azim)
            .map(|(&el, &az)| {
                let [a, b] = direction(el, az);
                Complex64::from_polar(1.0, k0 * (pos[0] * a + pos[1] * b))
            })
            .collect(),
    ))
}

/// Transmit field-response vector of the antenna at `t` (length `L`).
pub fn transmit_frv(paths: &PathSet, t: [f64; 2], lambda: f64) -> Result<CMatrix> {
    frv(&paths.tx_elevation, &paths.tx_azimuth, t, lambda)
}

/// Receive field-response vector at position `r` (length `Q`).
pub fn receive_frv(paths: &PathSet, r: [f64; 2], lambda: f64) -> Result<CMatrix> {
    frv(&paths.rx_elevation, &paths.rx_azimuth, r, lambda)
}

/// `h_{n,k}(r_k)` as a length-`I` column.
pub fn channel_vector(
    real: &ChannelRealization,
    n: usize,
    k: usize,
    r: [f64; 2],
) -> Result<CMatrix> {
    if n >= real.n_bs() || k >= real.n_users() {
        return Err(CoreError::Shape(format!(
            "link ({n}, {k}) out of range for {} BSs and {} users",
            real.n_bs(),
            real.n_users()
        )));
    }
    Ok(CMatrix::column(
        real.channel_generic(n, k, r)
            .into_iter()
            .map(Cx::value)
            .collect(),
    ))
}

fn complex_normal(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws a scenario deterministically from `seed`.
pub fn sample_scenario(params: &ScenarioParams, seed: u64) -> Result<ChannelRealization> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bs_positions: Vec<[f64; 2]> = (0..params.n_bs)
        .map(|n| {
            let a = 2.0 * PI * n as f64 / params.n_bs as f64;
            [params.bs_radius * a.cos(), params.bs_radius * a.sin()]
        })
        .collect();
    let user_positions: Vec<[f64; 2]> = (0..params.n_users)
        .map(|_| {
            let rad = params.user_radius * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(-PI..PI);
            [rad * a.cos(), rad * a.sin()]
        })
        .collect();
    let tx_antennas: Vec<[f64; 2]> = (0..params.n_bs)
        .flat_map(|_| (0..params.n_antennas).map(|i| [i as f64 * params.wavelength / 2.0, 0.0]))
        .collect();

    let mut geometry = ScenarioGeometry {
        n_bs: params.n_bs,
        n_antennas: params.n_antennas,
        n_users: params.n_users,
        bs_positions,
        user_positions,
        paths: Vec::new(),
        prm: Vec::new(),
        tx_antennas,
        wavelength: params.wavelength,
        half_width: params.region_wavelengths * params.wavelength / 2.0,
        noise_power: params.noise_power,
        path_loss_exp: params.path_loss_exp,
        ref_gain: params.ref_gain,
    };

    let angles = |count: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..count).map(|_| rng.gen_range(-FRAC_PI_2..=FRAC_PI_2)).collect()
    };
    for n in 0..params.n_bs {
        for k in 0..params.n_users {
            let paths = PathSet {
                tx_elevation: angles(params.n_tx_paths, &mut rng),
                tx_azimuth: angles(params.n_tx_paths, &mut rng),
                rx_elevation: angles(params.n_rx_paths, &mut rng),
                rx_azimuth: angles(params.n_rx_paths, &mut rng),
            };
            geometry.paths.push(paths);
            let var = geometry.prm_variance(n, k);
            let mut prm = CMatrix::zeros(params.n_rx_paths, params.n_tx_paths);
            for a in 0..params.n_rx_paths {
                for b in 0..params.n_tx_paths {
                    if !params.diagonal_prm || a == b {
                        prm.set(a, b, complex_normal(&mut rng, var));
                    }
                }
            }
            geometry.prm.push(prm);
        }
    }
    ChannelRealization::from_geometry(geometry)
}

const DUMP_HEADER: &str = "# comprsma scenario v1";

/// Text dump of a realization. Floats use the shortest round-trip form,
/// so [`load_scenario`] reproduces the realization bit-exactly.
pub fn dump_scenario(real: &ChannelRealization) -> String {
    let g = &real.geometry;
    let mut s = String::new();
    writeln!(s, "{DUMP_HEADER}").unwrap();
    writeln!(s, "n_bs {}", g.n_bs).unwrap();
    writeln!(s, "n_antennas {}", g.n_antennas).unwrap();
    writeln!(s, "n_users {}", g.n_users).unwrap();
    writeln!(s, "wavelength {:?}", g.wavelength).unwrap();
    writeln!(s, "half_width {:?}", g.half_width).unwrap();
    writeln!(s, "noise_power {:?}", g.noise_power).unwrap();
    writeln!(s, "path_loss_exp {:?}", g.path_loss_exp).unwrap();
    writeln!(s, "ref_gain {:?}", g.ref_gain).unwrap();
    for (n, p) in g.bs_positions.iter().enumerate() {
        writeln!(s, "bs {n} {:?} {:?}", p[0], p[1]).unwrap();
    }
    for (k, p) in g.user_positions.iter().enumerate() {
        writeln!(s, "user {k} {:?} {:?}", p[0], p[1]).unwrap();
    }
    for (idx, t) in g.tx_antennas.iter().enumerate() {
        let (n, i) = (idx / g.n_antennas, idx % g.n_antennas);
        writeln!(s, "tx_antenna {n} {i} {:?} {:?}", t[0], t[1]).unwrap();
    }
    for n in 0..g.n_bs {
        for k in 0..g.n_users {
            let link = g.link(n, k);
            let paths = &g.paths[link];
            writeln!(s, "link {n} {k} {} {}", paths.n_tx(), paths.n_rx()).unwrap();
            for m in 0..paths.n_tx() {
                writeln!(
                    s,
                    "tx_path {m} {:?} {:?}",
                    paths.tx_elevation[m], paths.tx_azimuth[m]
                )
                .unwrap();
            }
            for d in 0..paths.n_rx() {
                writeln!(
                    s,
                    "rx_path {d} {:?} {:?}",
                    paths.rx_elevation[d], paths.rx_azimuth[d]
                )
                .unwrap();
            }
            let prm = &g.prm[link];
            for a in 0..prm.rows() {
                for b in 0..prm.cols() {
                    let z = prm.get(a, b);
                    writeln!(s, "prm {a} {b} {:?} {:?}", z.re, z.im).unwrap();
                }
            }
        }
    }
    s
}

struct Lines<'a> {
    it: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next_record(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (no, line) in self.it.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok((no + 1, t.split_whitespace().collect()));
        }
        Err(CoreError::Parse {
            line: 0,
            message: "unexpected end of scenario".into(),
        })
    }

    fn expect(&mut self, tag: &str, arity: usize) -> Result<(usize, Vec<&'a str>)> {
        let (line, parts) = self.next_record()?;
        if parts[0] != tag || parts.len() != arity + 1 {
            return Err(CoreError::Parse {
                line,
                message: format!("expected `{tag}` with {arity} fields, got `{}`", parts.join(" ")),
            });
        }
        Ok((line, parts[1..].to_vec()))
    }

    fn scalar(&mut self, tag: &str) -> Result<(usize, String)> {
        let (line, v) = self.expect(tag, 1)?;
        Ok((line, v[0].to_string()))
    }

    fn point(&mut self, tag: &str, idx: &[usize]) -> Result<[f64; 2]> {
        let (l, v) = self.expect(tag, idx.len() + 2)?;
        for (j, &want) in idx.iter().enumerate() {
            check_index(l, num(l, v[j])?, want)?;
        }
        Ok([num(l, v[idx.len()])?, num(l, v[idx.len() + 1])?])
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| CoreError::Parse {
        line,
        message: format!("bad number `{s}`"),
    })
}

fn check_index(line: usize, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(CoreError::Parse {
            line,
            message: format!("index {got} out of order, expected {want}"),
        });
    }
    Ok(())
}

/// Parses the output of [`dump_scenario`].
pub fn load_scenario(text: &str) -> Result<ChannelRealization> {
    let mut lines = Lines {
        it: text.lines().enumerate().peekable(),
    };
    let (l, v) = lines.scalar("n_bs")?;
    let n_bs: usize = num(l, &v)?;
    let (l, v) = lines.scalar("n_antennas")?;
    let n_antennas: usize = num(l, &v)?;
    let (l, v) = lines.scalar("n_users")?;
    let n_users: usize = num(l, &v)?;
    let mut floats = [0.0f64; 5];
    for (slot, tag) in floats.iter_mut().zip([
        "wavelength",
        "half_width",
        "noise_power",
        "path_loss_exp",
        "ref_gain",
    ]) {
        let (l, v) = lines.scalar(tag)?;
        *slot = num(l, &v)?;
    }
    let [wavelength, half_width, noise_power, path_loss_exp, ref_gain] = floats;

    let bs_positions = (0..n_bs).map(|n| lines.point("bs", &[n])).collect::<Result<Vec<_>>>()?;
    let user_positions = (0..n_users)
        .map(|k| lines.point("user", &[k]))
        .collect::<Result<Vec<_>>>()?;
    let mut tx_antennas = Vec::with_capacity(n_bs * n_antennas);
    for n in 0..n_bs {
        for i in 0..n_antennas {
            tx_antennas.push(lines.point("tx_antenna", &[n, i])?);
        }
    }
    let mut paths = Vec::new();
    let mut prm = Vec::new();
    for n in 0..n_bs {
        for k in 0..n_users {
            let (l, v) = lines.expect("link", 4)?;
            check_index(l, num(l, v[0])?, n)?;
            check_index(l, num(l, v[1])?, k)?;
            let n_tx: usize = num(l, v[2])?;
            let n_rx: usize = num(l, v[3])?;
            let mut ps = PathSet {
                tx_elevation: Vec::new(),
                tx_azimuth: Vec::new(),
                rx_elevation: Vec::new(),
                rx_azimuth: Vec::new(),
            };
            for m in 0..n_tx {
                let [el, az] = lines.point("tx_path", &[m])?;
                ps.tx_elevation.push(el);
                ps.tx_azimuth.push(az);
            }
            for d in 0..n_rx {
                let [el, az] = lines.point("rx_path", &[d])?;
                ps.rx_elevation.push(el);
                ps.rx_azimuth.push(az);
            }
            let mut m = CMatrix::zeros(n_rx, n_tx);
            for a in 0..n_rx {
                for b in 0..n_tx {
                    let [re, im] = lines.point("prm", &[a, b])?;
                    m.set(a, b, Complex64::new(re, im));
                }
            }
            paths.push(ps);
            prm.push(m);
        }
    }
    ChannelRealization::from_geometry(ScenarioGeometry {
        n_bs,
        n_antennas,
        n_users,
        bs_positions,
        user_positions,
        paths,
        prm,
        tx_antennas,
        wavelength,
        half_width,
        noise_power,
        path_loss_exp,
        ref_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Tape;

    fn one_path(el: f64, az: f64) -> PathSet {
        PathSet {
            tx_elevation: vec![el],
            tx_azimuth: vec![az],
            rx_elevation: vec![el],
            rx_azimuth: vec![az],
        }
    }

    #[test]
    fn frv_at_origin_is_all_ones() {
        let real = sample_scenario(&ScenarioParams::default(), 1).unwrap();
        let paths = &real.geometry.paths[0];
        for z in transmit_frv(paths, [0.0, 0.0], 0.01).unwrap().as_slice() {
            assert_eq!(*z, Complex64::new(1.0, 0.0));
        }
        for z in receive_frv(paths, [0.0, 0.0], 0.01).unwrap().as_slice() {
            assert_eq!(*z, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn quarter_and_half_wavelength_phases() {
        let lambda = 0.01;
        let t = transmit_frv(&one_path(0.0, FRAC_PI_2), [lambda / 4.0, 0.0], lambda).unwrap();
        assert!((t.get(0, 0) - Complex64::new(0.0, 1.0)).norm() < 1e-12);
        let r = receive_frv(&one_path(FRAC_PI_2, 0.3), [0.0, lambda / 2.0], lambda).unwrap();
        assert!((r.get(0, 0) - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn nonpositive_wavelength_rejected() {
        assert!(matches!(
            transmit_frv(&one_path(0.0, 0.0), [0.0, 0.0], 0.0),
            Err(CoreError::Config { .. })
        ));
    }

    #[test]
    fn frv_entries_match_scalar_formula() {
        let real = sample_scenario(&ScenarioParams::default(), 9).unwrap();
        let paths = &real.geometry.paths[3];
        let t = [0.0123, -0.0047];
        let v = transmit_frv(paths, t, 0.01).unwrap();
        for m in 0..paths.n_tx() {
            let (el, az) = (paths.tx_elevation[m], paths.tx_azimuth[m]);
            let rho = t[0] * el.cos() * az.sin() + t[1] * el.sin();
            let phase = 2.0 * PI / 0.01 * rho;
            let z = v.get(m, 0);
            assert!((z.re - phase.cos()).abs() < 1e-12);
            assert!((z.im - phase.sin()).abs() < 1e-12);
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn default_shapes() {
        let real = sample_scenario(&ScenarioParams::default(), 3).unwrap();
        let g = &real.geometry;
        assert_eq!(g.paths.len(), 8);
        assert_eq!(g.prm.len(), 8);
        assert!(g.prm.iter().all(|m| m.rows() == 6 && m.cols() == 6));
        assert_eq!(real.tx_frm.len(), 8);
        assert!(real.tx_frm.iter().all(|m| m.rows() == 6 && m.cols() == 4));
        assert!((g.half_width * 2.0 - 2.0 * g.wavelength).abs() < 1e-15);
        for m in &real.tx_frm {
            assert!(m.as_slice().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_counts_rejected() {
        let p = ScenarioParams {
            n_users: 0,
            ..Default::default()
        };
        assert!(matches!(
            sample_scenario(&p, 0),
            Err(CoreError::Config { field, .. }) if field == "n_users"
        ));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = ScenarioParams::default();
        assert_eq!(sample_scenario(&p, 42).unwrap(), sample_scenario(&p, 42).unwrap());
        assert_ne!(sample_scenario(&p, 42).unwrap(), sample_scenario(&p, 43).unwrap());
    }

    #[test]
    fn identity_composition_gives_all_ones() {
        let geometry = ScenarioGeometry {
            n_bs: 1,
            n_antennas: 3,
            n_users: 1,
            bs_positions: vec![[100.0, 0.0]],
            user_positions: vec![[0.0, 0.0]],
            paths: vec![one_path(0.0, 0.0)],
            prm: vec![CMatrix::column(vec![Complex64::new(1.0, 0.0)])],
            tx_antennas: vec![[0.0, 0.0]; 3],
            wavelength: 0.01,
            half_width: 0.01,
            noise_power: 1.0,
            path_loss_exp: 2.0,
            ref_gain: 1.0,
        };
        let real = ChannelRealization::from_geometry(geometry.clone()).unwrap();
        let h = channel_vector(&real, 0, 0, [0.0, 0.0]).unwrap();
        assert!(h.as_slice().iter().all(|z| *z == Complex64::new(1.0, 0.0)));

        let mut doubled = geometry;
        doubled.prm[0].scale(2.0);
        let real2 = ChannelRealization::from_geometry(doubled).unwrap();
        let h2 = channel_vector(&real2, 0, 0, [0.003, -0.002]).unwrap();
        let h1 = channel_vector(&real, 0, 0, [0.003, -0.002]).unwrap();
        for (a, b) in h1.as_slice().iter().zip(h2.as_slice()) {
            assert!((a * 2.0 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn channel_matches_triple_loop() {
        let real = sample_scenario(&ScenarioParams::default(), 5).unwrap();
        let g = &real.geometry;
        let r = [0.0031, -0.0068];
        for (n, k) in [(0, 0), (1, 3)] {
            let link = g.link(n, k);
            let paths = &g.paths[link];
            let f = receive_frv(paths, r, g.wavelength).unwrap();
            let got = channel_vector(&real, n, k, r).unwrap();
            for i in 0..g.n_antennas {
                let t = g.tx_antennas[n * g.n_antennas + i];
                let gi = transmit_frv(paths, t, g.wavelength).unwrap();
                let mut acc = Complex64::new(0.0, 0.0);
                for q in 0..paths.n_rx() {
                    for l in 0..paths.n_tx() {
                        acc += f.get(q, 0) * g.prm[link].get(q, l) * gi.get(l, 0);
                    }
                }
                assert!((acc - got.get(i, 0)).norm() <= 1e-12 * (1.0 + acc.norm()));
            }
        }
    }

    #[test]
    fn out_of_range_link_is_shape_error() {
        let real = sample_scenario(&ScenarioParams::default(), 5).unwrap();
        assert!(matches!(
            channel_vector(&real, 2, 0, [0.0, 0.0]),
            Err(CoreError::Shape(_))
        ));
    }

    #[test]
    fn receive_phase_gradient_matches_finite_differences() {
        let real = sample_scenario(&ScenarioParams::default(), 11).unwrap();
        let r0 = [0.0021, 0.0043];
        let tape = Tape::new();
        let x = tape.var(r0[0]);
        let y = tape.var(r0[1]);
        let h = real.channel_generic(1, 2, [x, y]);
        for (i, z) in h.iter().enumerate() {
            for (part, node) in [(0, z.re), (1, z.im)] {
                let g = tape.backward(node, &[x, y]);
                for axis in 0..2 {
                    let step = 1e-6 * real.wavelength();
                    let mut rp = r0;
                    let mut rm = r0;
                    rp[axis] += step;
                    rm[axis] -= step;
                    let hp = real.channel_generic(1, 2, rp)[i];
                    let hm = real.channel_generic(1, 2, rm)[i];
                    let (vp, vm) = if part == 0 { (hp.re, hm.re) } else { (hp.im, hm.im) };
                    let fd = (vp - vm) / (2.0 * step);
                    let scale = fd.abs().max(g[axis].abs()).max(1e-300);
                    assert!((fd - g[axis]).abs() / scale < 1e-4, "{fd} vs {}", g[axis]);
                }
            }
        }
    }

    #[test]
    fn prm_entry_power_matches_variance() {
        // Sample mean of |Σ[a,b]|² normalised by the link variance.
        let p = ScenarioParams {
            n_bs: 1,
            n_users: 1,
            ..Default::default()
        };
        let draws = 10_000 / 36 + 1;
        let mut acc = 0.0;
        let mut count = 0usize;
        for seed in 0..draws as u64 {
            let real = sample_scenario(&p, seed).unwrap();
            let var = real.geometry.prm_variance(0, 0);
            for z in real.geometry.prm[0].as_slice() {
                acc += z.norm_sqr() / var;
                count += 1;
            }
        }
        let mean = acc / count as f64;
        assert!((mean - 1.0).abs() < 0.05, "normalised mean {mean}");
    }

    #[test]
    fn dump_load_roundtrip() {
        let real = sample_scenario(&ScenarioParams::default(), 77).unwrap();
        let text = dump_scenario(&real);
        let back = load_scenario(&text).unwrap();
        assert_eq!(real, back);
    }

    #[test]
    fn load_rejects_truncated() {
        let real = sample_scenario(&ScenarioParams::default(), 77).unwrap();
        let text = dump_scenario(&real);
        let cut: String = text.lines().take(20).collect::<Vec<_>>().join("\n");
        assert!(matches!(load_scenario(&cut), Err(CoreError::Parse { .. })));
    }

    #[test]
    fn full_phase_turn_changes_nothing() {
        let real = sample_scenario(&ScenarioParams::default(), 21).unwrap();
        let mut g = real.geometry.clone();
        // One receive path along x (θ = 0, φ = π/2): moving one wavelength
        // in x adds exactly 2π to its phase.
        g.paths[0].rx_elevation[0] = 0.0;
        g.paths[0].rx_azimuth[0] = FRAC_PI_2;
        let real = ChannelRealization::from_geometry(g).unwrap();
        let f0 = receive_frv(&real.geometry.paths[0], [0.001, 0.0], 0.01).unwrap();
        let f1 = receive_frv(&real.geometry.paths[0], [0.011, 0.0], 0.01).unwrap();
        assert!((f0.get(0, 0) - f1.get(0, 0)).norm() < 1e-12);
    }
}
