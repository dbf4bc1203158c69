#pragma once

namespace vibronlab::constants {

// CODATA 2018 values, SI units throughout.
inline constexpr double elementary_charge = 1.602176634e-19;   // C
inline constexpr double vacuum_permittivity = 8.8541878128e-12; // F/m
inline constexpr double hbar = 1.054571817e-34;                // J s
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// Coulomb coupling strength e^2 / (4 pi eps0).
inline constexpr double coulomb_coupling =
    elementary_charge * elementary_charge /
    (4.0 * pi * vacuum_permittivity); // J m

// Ion masses.
inline constexpr double mass_mg24 = 23.985041697 * atomic_mass_unit; // kg
inline constexpr double mass_mg25 = 24.985836976 * atomic_mass_unit; // kg
inline constexpr double mass_be9 = 9.012183065 * atomic_mass_unit;   // kg

// Mg+ cooling transition.
inline constexpr double wavelength_mg = 280.353e-9;              // m
inline constexpr double linewidth_mg = two_pi * 41.4e6;          // rad/s

} // namespace vibronlab::constants
