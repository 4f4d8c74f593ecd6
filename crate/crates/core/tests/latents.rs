mod common;

use common::SEPARATION_EPOCHS;

#[test]
fn each_file_needs_its_own_latent() {
    let s = common::latent_separation(SEPARATION_EPOCHS);
    for i in 0..2 {
        assert!(s.own[i] >= 25.0, "file {i}: {:.2} dB with its own latent", s.own[i]);
        assert!(s.swapped[i] < s.own[i], "file {i}: swapped {:.2} dB vs own {:.2} dB", s.swapped[i], s.own[i]);
    }
}
