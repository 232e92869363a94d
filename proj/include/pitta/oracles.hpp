#pragma once
// Named brute-force oracles, runnable from the CLI (`pitta oracle <name>`).
// Each oracle is an independent direct computation (naive DFT sums, explicit
// pairwise loops, closed forms) that does not call the engine code paths it
// is used to check.

#include <string>
#include <vector>

namespace pitta::oracles {

std::vector<std::string> names();

// Executes the named oracle and returns its printed value(s), one per line.
// Throws pitta::Error for unknown names.
std::string run(const std::string& name);

// Individual oracles (used directly by tests).
double js_two_bin();                 // JS((1,0),(0,1)) with eps = 1e-8, closed form
double silhouette_six_point();       // brute-force pairwise silhouette
int window_count_1000_128_64();      // enumeration of window starts
std::vector<int> window_starts_1000_128_64();
int psd_sine_bin();                  // naive-DFT argmax bin, 2 Hz @ 100 Hz, N=1024
int drift_shifted_bin();             // naive-DFT argmax after 100->120 Hz warp, T=250
int drift_expected_bin();            // bin nearest 2*(100/120) Hz at T=250
double placement_waist_arm_norm();   // closed-form gravity magnitude under the preset
double harmonic_power_ratio();       // naive-DFT peak power ratio for (1,1.0),(2,0.5)

}  // namespace pitta::oracles
