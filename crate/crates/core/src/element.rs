//! Periodic-table lookups by atomic number.

/// Highest atomic number admitted anywhere in the crate.
pub const MAX_ATOMIC_NUMBER: u8 = 118;

const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm",
    "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds",
    "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Element symbol for `z`, or `None` outside `1..=118`.
pub fn symbol(z: u8) -> Option<&'static str> {
    if (1..=MAX_ATOMIC_NUMBER).contains(&z) {
        Some(SYMBOLS[usize::from(z) - 1])
    } else {
        None
    }
}

/// Atomic number for a case-sensitive element symbol.
pub fn atomic_number(symbol: &str) -> Option<u8> {
    SYMBOLS
        .iter()
        .position(|s| *s == symbol)
        .map(|i| (i + 1) as u8)
}

/// Valence-shell electron count for main-group elements (groups 1, 2, 13-18).
///
/// Transition metals and f-block elements return `None`.
pub fn valence_electrons(z: u8) -> Option<u8> {
    let (period_start, group_offset) = match z {
        1 => return Some(1),
        2 => return Some(2),
        3..=10 => (3, 0),
        11..=18 => (11, 0),
        19..=20 | 31..=36 => (19, if z >= 31 { 10 } else { 0 }),
        37..=38 | 49..=54 => (37, if z >= 49 { 10 } else { 0 }),
        55..=56 | 81..=86 => (55, if z >= 81 { 24 } else { 0 }),
        87..=88 | 113..=118 => (87, if z >= 113 { 24 } else { 0 }),
        _ => return None,
    };
    Some(z - period_start - group_offset + 1)
}
