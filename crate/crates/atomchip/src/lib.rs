//! Atom-chip microtrap toolkit: static wire fields and trap
//! characterization, ground-state hyperfine structure of ⁸⁷Rb, thermal
//! ensembles and their clock-transition shifts, Ramsey coherence, clock
//! stability analysis, and microwave near-field (AC Zeeman) potentials.
//!
//! Internal units are strictly SI (T, m, s, K, A); energies are quoted as
//! E/h in Hz. Gauss, µm, µK and mA appear only at configuration
//! boundaries.

pub mod clock;
pub mod coherence;
pub mod config;
pub mod constants;
pub mod ensemble;
pub mod fieldmap;
pub mod fitting;
pub mod hyperfine;
pub mod mw_nearfield;
pub mod trapchar;

// The guide's code snippets double as documentation tests, so the book in
// book/ can never drift from the API.
#[cfg(doctest)]
mod guide {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(hyperfine, "../../../book/src/hyperfine.md");
    chapter!(traps, "../../../book/src/traps.md");
    chapter!(ensembles, "../../../book/src/ensembles.md");
    chapter!(ramsey, "../../../book/src/ramsey.md");
    chapter!(clock, "../../../book/src/clock.md");
    chapter!(microwave, "../../../book/src/microwave.md");
    chapter!(cli, "../../../book/src/cli.md");
}
