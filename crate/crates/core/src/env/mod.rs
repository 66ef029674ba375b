//! Random environments: marked point configurations in a finite box.

mod campbell;
mod configuration;
mod count_field;
mod crystal;
mod nu;
mod poisson;
mod table;

pub use campbell::{
    campbell_battery, campbell_estimate, palm_battery, CrystalSource, LocalBattery, PalmSource,
    PoissonSource, StationarySource,
};
pub use configuration::MarkedConfiguration;
pub use count_field::{count_field, CountField};
pub use crystal::{diluted_crystal, palm_crystal, Crystal, CrystalSpec};
pub use nu::NuLaw;
pub(crate) use poisson::poisson_count;
pub use poisson::{palm_poisson, randomize, sample_poisson, thin, thinning_mask};
pub use table::{export_table, import_table};

/// Draw one energy mark.
pub fn sample_energy<R: rand::Rng + ?Sized>(nu: &NuLaw, rng: &mut R) -> f64 {
    nu.sample(rng)
}
