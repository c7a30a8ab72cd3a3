use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical thresholds shared by every operation. All fields can be
/// overridden from a run configuration by key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub eps_mem: f64,
    pub eps_tan: f64,
    pub eps_num: f64,
    pub h_fd: f64,
    pub sigma_min: f64,
    pub r_basin: f64,
    pub max_newton: usize,
    pub eps_iso: f64,
    pub eps_crit: f64,
    pub crit_hold: usize,
    pub t_max: f64,
    pub r_cluster: f64,
    pub eps_eig: f64,
    pub tol_slope: f64,
    pub tol_ss: f64,
    pub tol_limit: f64,
    pub tol_quad: f64,
    pub eps_lvl: f64,
    pub tol_hull: f64,
    pub tol_cover: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_mem: 1e-10,
            eps_tan: 1e-8,
            eps_num: 1e-8,
            h_fd: 1e-5,
            sigma_min: 1e-8,
            r_basin: 10.0,
            max_newton: 60,
            eps_iso: 1e-7,
            eps_crit: 1e-8,
            crit_hold: 20,
            t_max: 1e4,
            r_cluster: 1e-4,
            eps_eig: 1e-5,
            tol_slope: 1e-6,
            tol_ss: 1e-6,
            tol_limit: 1e-9,
            tol_quad: 1e-12,
            eps_lvl: 1e-11,
            tol_hull: 1e-6,
            tol_cover: 1e-3,
        }
    }
}

impl Tolerances {
    pub const KEYS: &'static [&'static str] = &[
        "eps_mem", "eps_tan", "eps_num", "h_fd", "sigma_min", "r_basin", "max_newton", "eps_iso",
        "eps_crit", "crit_hold", "t_max", "r_cluster", "eps_eig", "tol_slope", "tol_ss",
        "tol_limit", "tol_quad", "eps_lvl", "tol_hull", "tol_cover",
    ];

    /// Override one threshold by key.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Config(format!("tolerance {key} must be finite and >= 0")));
        }
        match key {
            "eps_mem" => self.eps_mem = value,
            "eps_tan" => self.eps_tan = value,
            "eps_num" => self.eps_num = value,
            "h_fd" => self.h_fd = value,
            "sigma_min" => self.sigma_min = value,
            "r_basin" => self.r_basin = value,
            "max_newton" => self.max_newton = value as usize,
            "eps_iso" => self.eps_iso = value,
            "eps_crit" => self.eps_crit = value,
            "crit_hold" => self.crit_hold = value as usize,
            "t_max" => self.t_max = value,
            "r_cluster" => self.r_cluster = value,
            "eps_eig" => self.eps_eig = value,
            "tol_slope" => self.tol_slope = value,
            "tol_ss" => self.tol_ss = value,
            "tol_limit" => self.tol_limit = value,
            "tol_quad" => self.tol_quad = value,
            "eps_lvl" => self.eps_lvl = value,
            "tol_hull" => self.tol_hull = value,
            "tol_cover" => self.tol_cover = value,
            _ => return Err(Error::Config(format!("unknown tolerance key {key}"))),
        }
        Ok(())
    }

    /// Parse a `KEY=VAL` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected KEY=VAL, got {spec}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad number in {spec}")))?;
        self.set(k.trim(), v)
    }
}
