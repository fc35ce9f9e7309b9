//! Ladder qubit graphs: species pattern, crossed qubits and connectivity
//! dependent frequency corrections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Species {
    A,
    B,
    C,
}

impl Species {
    pub const ALL: [Species; 3] = [Species::A, Species::B, Species::C];

    /// Position in channel-ordered arrays (A, B, C).
    pub fn index(self) -> usize {
        match self {
            Species::A => 0,
            Species::B => 1,
            Species::C => 2,
        }
    }

    /// Species of intra-row column `c` in the periodic CABA pattern.
    pub fn of_column(c: usize) -> Species {
        match c % 4 {
            0 => Species::C,
            2 => Species::B,
            _ => Species::A,
        }
    }
}

impl std::fmt::Display for Species {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Species::A => "A",
            Species::B => "B",
            Species::C => "C",
        };
        f.write_str(s)
    }
}

/// Where a qubit sits. Couplers bridge `upper_row` and `upper_row + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Site {
    Grid { row: usize, column: usize },
    Coupler { upper_row: usize, column: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitSpec {
    pub index: usize,
    pub species: Species,
    pub crossed: bool,
    pub freq_class: i32,
    pub degree: usize,
    pub site: Site,
}

impl QubitSpec {
    /// Drive-coupling multiplier m_i.
    pub fn drive_multiplier(&self) -> f64 {
        if self.crossed {
            2.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderLayout {
    pub name: String,
    pub qubits: Vec<QubitSpec>,
    pub edges: Vec<(usize, usize)>,
    pub rows: usize,
    pub columns: usize,
}

/// Qubit count of the full ladder with `n` rows.
pub fn ladder_qubit_count(n: usize) -> usize {
    2 * n * n + 4 * n - 1
}

struct Builder {
    qubits: Vec<QubitSpec>,
    edges: Vec<(usize, usize)>,
}

impl Builder {
    fn new() -> Self {
        Self {
            qubits: Vec::new(),
            edges: Vec::new(),
        }
    }

    fn add(&mut self, species: Species, crossed: bool, site: Site) -> usize {
        let index = self.qubits.len();
        self.qubits.push(QubitSpec {
            index,
            species,
            crossed,
            freq_class: 0,
            degree: 0,
            site,
        });
        index
    }

    fn connect(&mut self, a: usize, b: usize) {
        self.edges.push((a.min(b), a.max(b)));
    }

    fn finish(mut self, name: &str, rows: usize, columns: usize) -> LadderLayout {
        for &(a, b) in &self.edges {
            self.qubits[a].degree += 1;
            self.qubits[b].degree += 1;
        }
        for q in &mut self.qubits {
            q.freq_class = match q.species {
                Species::A => 0,
                _ => q.degree as i32 - 2,
            };
        }
        LadderLayout {
            name: name.to_string(),
            qubits: self.qubits,
            edges: self.edges,
            rows,
            columns,
        }
    }
}

/// Full ladder with `n` rows and `2n + 3` columns.
///
/// Row `r` holds its single-qubit-gate crossed B/C qubit at column `2 + 2r`,
/// and the crossed A coupler between rows `r` and `r + 1` sits at the same
/// column, attached to the two B/C qubits above and below it.
pub fn build_ladder(n: usize) -> Result<LadderLayout> {
    if n == 0 {
        return Err(Error::InvalidArgument("ladder needs at least one row".into()));
    }
    let columns = 2 * n + 3;
    let mut b = Builder::new();
    for row in 0..n {
        for column in 0..columns {
            let crossed = column == 2 + 2 * row;
            let id = b.add(Species::of_column(column), crossed, Site::Grid { row, column });
            if column > 0 {
                b.connect(id - 1, id);
            }
        }
    }
    for upper_row in 0..n - 1 {
        let column = 2 + 2 * upper_row;
        let id = b.add(Species::A, true, Site::Coupler { upper_row, column });
        b.connect(upper_row * columns + column, id);
        b.connect((upper_row + 1) * columns + column, id);
    }
    Ok(b.finish(&format!("ladder{n}"), n, columns))
}

/// Single row of `n` qubits following the CABA pattern, without crossed qubits.
pub fn build_row(n: usize) -> Result<LadderLayout> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("row length must be odd and >= 3, got {n}")));
    }
    let species: Vec<Species> = (0..n).map(Species::of_column).collect();
    let mut layout = build_chain(&species)?;
    layout.name = format!("row{n}");
    Ok(layout)
}

/// Open chain with an explicit species sequence, e.g. the A-B-A triplet.
pub fn build_chain(species: &[Species]) -> Result<LadderLayout> {
    if species.is_empty() {
        return Err(Error::InvalidArgument("empty chain".into()));
    }
    if species.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("adjacent qubits must differ in species".into()));
    }
    let mut b = Builder::new();
    for (column, &s) in species.iter().enumerate() {
        let id = b.add(s, false, Site::Grid { row: 0, column });
        if column > 0 {
            b.connect(id - 1, id);
        }
    }
    let name: String = species.iter().map(|s| s.to_string()).collect();
    Ok(b.finish(&name, 1, species.len()))
}

/// Seven-qubit two-row layout for the CZ gate: two A-C-A arms whose C data
/// qubits are bridged by one crossed A qubit.
pub fn build_reversed_h() -> LadderLayout {
    let mut b = Builder::new();
    for row in 0..2 {
        for column in 0..3 {
            let species = if column == 1 { Species::C } else { Species::A };
            let id = b.add(species, false, Site::Grid { row, column });
            if column > 0 {
                b.connect(id - 1, id);
            }
        }
    }
    let bridge = b.add(Species::A, true, Site::Coupler { upper_row: 0, column: 1 });
    b.connect(1, bridge);
    b.connect(4, bridge);
    b.finish("reversed_h", 2, 3)
}

impl LadderLayout {
    pub fn n_qubits(&self) -> usize {
        self.qubits.len()
    }

    pub fn dim(&self) -> usize {
        1usize << self.qubits.len()
    }

    /// Neighbour lists indexed by qubit.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.qubits.len()];
        for &(a, b) in &self.edges {
            out[a].push(b);
            out[b].push(a);
        }
        out
    }

    /// Bit mask of the neighbours of each qubit.
    pub fn neighbor_masks(&self) -> Vec<usize> {
        self.neighbors().iter().map(|ns| ns.iter().fold(0usize, |m, &j| m | (1 << j))).collect()
    }

    pub fn qubits_of(&self, species: Species) -> impl Iterator<Item = &QubitSpec> {
        self.qubits.iter().filter(move |q| q.species == species)
    }

    /// Index of the grid qubit at (`row`, `column`).
    pub fn grid_qubit(&self, row: usize, column: usize) -> Option<usize> {
        self.qubits.iter().position(|q| q.site == Site::Grid { row, column })
    }

    /// Marks grid qubit `index` as crossed and returns the updated layout.
    pub fn with_crossed(mut self, index: usize) -> Result<Self> {
        let q = self.qubits.get_mut(index).ok_or_else(|| Error::InvalidArgument(format!("no qubit {index}")))?;
        q.crossed = true;
        Ok(self)
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<()> {
        let n = self.qubits.len();
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &self.edges {
            if a == b || a >= n || b >= n {
                return Err(Error::Layout(format!("bad edge ({a}, {b})")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::Layout(format!("duplicate edge ({a}, {b})")));
            }
            if self.qubits[a].species == self.qubits[b].species {
                return Err(Error::Layout(format!("edge ({a}, {b}) joins equal species")));
            }
        }
        let nbrs = self.neighbors();
        for q in &self.qubits {
            if q.degree != nbrs[q.index].len() {
                return Err(Error::Layout(format!("qubit {} has wrong degree", q.index)));
            }
            let expected = match q.species {
                Species::A => 0,
                _ => q.degree as i32 - 2,
            };
            if q.freq_class != expected {
                return Err(Error::Layout(format!("qubit {} has wrong freq_class", q.index)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let layout: Self = serde_json::from_str(s)?;
        layout.validate()?;
        Ok(layout)
    }
}
