use rand::Rng;

use crate::datastore::Modality;
use crate::tribenet::ModalityMask;

/// Masks each modality independently with probability `p`; if every
/// modality ends up masked, one of them is unmasked uniformly at random.
pub fn sample_modality_mask(p: f64, rng: &mut impl Rng) -> ModalityMask {
    sample_mask_for(p, &Modality::ALL, rng)
}

/// Same as [`sample_modality_mask`] restricted to `active`. Modalities
/// outside `active` are left unmasked.
pub fn sample_mask_for(p: f64, active: &[Modality], rng: &mut impl Rng) -> ModalityMask {
    debug_assert!((0.0..1.0).contains(&p));
    let mut mask = ModalityMask::none();
    if p <= 0.0 || active.is_empty() {
        return mask;
    }
    for &m in active {
        mask.set(m, rng.random::<f64>() < p);
    }
    if active.iter().all(|&m| mask.is_masked(m)) {
        let keep = active[rng.random_range(0..active.len())];
        mask.set(keep, false);
    }
    mask
}
