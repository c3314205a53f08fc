//! Modulation of the physical signal parameters.

use crate::error::{Error, Result};
use crate::signal::ParameterMaps;

/// Scale the attenuation coefficient by `gamma`: `I_T' = I_0 (I_T / I_0)^gamma`.
pub fn scale_attenuation(maps: &ParameterMaps, gamma: f64) -> Result<ParameterMaps> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("attenuation scale {gamma} must be > 0")));
    }
    let mut out = maps.clone();
    if gamma == 1.0 {
        return Ok(out);
    }
    scale_transmittance(&mut out, gamma);
    Ok(out)
}

/// Scale the section thickness by `gamma`. Phase retardation is proportional
/// to thickness, so `r' = |sin(gamma * asin(r))|`; transmittance follows the
/// same power law as for attenuation.
pub fn scale_thickness(maps: &ParameterMaps, gamma: f64) -> Result<ParameterMaps> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("thickness scale {gamma} must be > 0")));
    }
    let mut out = maps.clone();
    if gamma == 1.0 {
        return Ok(out);
    }
    for r in out.retardation.as_mut_slice() {
        *r = (gamma * r.clamp(0.0, 1.0).asin()).sin().abs();
    }
    scale_transmittance(&mut out, gamma);
    Ok(out)
}

fn scale_transmittance(maps: &mut ParameterMaps, gamma: f64) {
    let i0 = maps.incident;
    for t in maps.transmittance.as_mut_slice() {
        *t = i0 * (*t / i0).powf(gamma);
    }
}
