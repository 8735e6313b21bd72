//! Built-in codes and concatenation trees.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliString, StabilizerCode};

fn ps(s: &str) -> PauliString {
    s.parse().expect("valid literal")
}

/// The [[5,1,3]] perfect code with generators `XZZXI, IXZZX, XIXZZ, ZXIXZ`.
pub fn five_qubit_code() -> StabilizerCode {
    let gens = ["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"].map(ps).to_vec();
    StabilizerCode::new(5, gens, vec![(ps("XXXXX"), ps("ZZZZZ"))])
        .expect("five-qubit code is valid")
}

/// The [[7,1,3]] Steane code built from the [7,4] Hamming parity checks.
///
/// Column `j` of the parity-check matrix is the binary expansion of `j + 1`,
/// so qubit 7 sits in every check. Generators 0..3 are Z-type (they detect
/// X errors), 3..6 the X-type copies.
pub fn steane_code() -> StabilizerCode {
    let supports: [[usize; 4]; 3] = [[3, 4, 5, 6], [1, 2, 5, 6], [0, 2, 4, 6]];
    let mut gens = Vec::with_capacity(6);
    for p in [Pauli::Z, Pauli::X] {
        for support in &supports {
            let mut g = PauliString::identity(7);
            for &q in support {
                g.set(q, p);
            }
            gens.push(g);
        }
    }
    StabilizerCode::new(7, gens, vec![(ps("XXXXXXX"), ps("ZZZZZZZ"))])
        .expect("Steane code is valid")
}

/// The Z-type half of the Steane code: the classical Hamming code seen by
/// bit-flip noise.
pub fn hamming_bit_flip_code() -> StabilizerCode {
    steane_code().with_generators(&[0, 1, 2]).expect("subset of valid generators")
}

/// Bit-flip repetition code on `n` qubits with generators `Z_i Z_{i+1}`.
pub fn repetition_code(n: usize) -> Result<StabilizerCode> {
    if n < 2 {
        return Err(Error::invalid("repetition code needs n >= 2"));
    }
    let gens = (0..n - 1)
        .map(|i| {
            let mut g = PauliString::identity(n);
            g.set(i, Pauli::Z);
            g.set(i + 1, Pauli::Z);
            g
        })
        .collect();
    let xl = PauliString::from_paulis(&vec![Pauli::X; n]);
    let zl = PauliString::single(n, 0, Pauli::Z);
    StabilizerCode::new(n, gens, vec![(xl, zl)])
}

/// Named built-in code, as accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CodeSpec {
    FiveQubit,
    Steane,
    Repetition(usize),
}

impl CodeSpec {
    pub fn build(self) -> Result<StabilizerCode> {
        match self {
            CodeSpec::FiveQubit => Ok(five_qubit_code()),
            CodeSpec::Steane => Ok(steane_code()),
            CodeSpec::Repetition(n) => repetition_code(n),
        }
    }
}

impl FromStr for CodeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "five_qubit" | "five-qubit" | "5" => Ok(CodeSpec::FiveQubit),
            "steane" => Ok(CodeSpec::Steane),
            other => {
                let n = other
                    .strip_prefix("repetition:")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown code {other:?}")))?;
                Ok(CodeSpec::Repetition(n))
            }
        }
    }
}

impl fmt::Display for CodeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeSpec::FiveQubit => f.write_str("five_qubit"),
            CodeSpec::Steane => f.write_str("steane"),
            CodeSpec::Repetition(n) => write!(f, "repetition:{n}"),
        }
    }
}

impl TryFrom<String> for CodeSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CodeSpec> for String {
    fn from(c: CodeSpec) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct ConcatSpec {
    pub base: StabilizerCode,
    pub levels: usize,
}

impl ConcatSpec {
    pub fn new(base: StabilizerCode, levels: usize) -> Self {
        ConcatSpec { base, levels }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Child {
    /// Physical qubit index.
    Leaf(usize),
    /// Index into [`ConcatTree::blocks`].
    Block(usize),
}

#[derive(Debug, Clone)]
pub struct Block {
    pub children: Vec<Child>,
    /// 1 for blocks acting on physical qubits.
    pub level: usize,
    /// First syndrome bit owned by this block; it owns `l_base` bits.
    pub syndrome_offset: usize,
    pub first_leaf: usize,
    pub leaf_count: usize,
}

/// Concatenation tree. Blocks are stored in post-order (children before
/// their parent, leftmost subtree first); the root is the last block and the
/// syndrome bits follow the same order.
#[derive(Debug, Clone)]
pub struct ConcatTree {
    base: StabilizerCode,
    levels: usize,
    blocks: Vec<Block>,
}

pub fn concatenate(spec: &ConcatSpec) -> Result<ConcatTree> {
    if spec.levels < 1 {
        return Err(Error::invalid("concatenation needs at least one level"));
    }
    if spec.base.k() != 1 || spec.base.logicals().len() != 1 {
        return Err(Error::Unsupported(
            "concatenation needs a base code with one logical qubit and known logicals".into(),
        ));
    }
    let n = spec.base.n();
    n.checked_pow(spec.levels as u32)
        .filter(|&leaves| leaves <= 1 << 20)
        .ok_or_else(|| Error::invalid("concatenated code too large"))?;
    let mut tree = ConcatTree { base: spec.base.clone(), levels: spec.levels, blocks: Vec::new() };
    tree.build(spec.levels, 0);
    Ok(tree)
}

impl ConcatTree {
    fn build(&mut self, level: usize, first_leaf: usize) -> Child {
        if level == 0 {
            return Child::Leaf(first_leaf);
        }
        let n = self.base.n();
        let span = n.pow(level as u32 - 1);
        let children = (0..n).map(|j| self.build(level - 1, first_leaf + j * span)).collect();
        let index = self.blocks.len();
        self.blocks.push(Block {
            children,
            level,
            syndrome_offset: index * self.base.l(),
            first_leaf,
            leaf_count: span * n,
        });
        Child::Block(index)
    }

    pub fn base(&self) -> &StabilizerCode {
        &self.base
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn root(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn n_leaves(&self) -> usize {
        self.base.n().pow(self.levels as u32)
    }

    pub fn syndrome_bits(&self) -> usize {
        self.blocks.len() * self.base.l()
    }

    /// The full concatenated code as an explicit stabilizer code, with
    /// generators in the tree's syndrome-bit order.
    pub fn to_code(&self) -> Result<StabilizerCode> {
        let n_total = self.n_leaves();
        let mut gens = Vec::with_capacity(self.syndrome_bits());
        let mut logical_ops: Vec<(PauliString, PauliString)> = Vec::with_capacity(self.blocks.len());
        let child_ops = |child: &Child, ops: &[(PauliString, PauliString)]| match *child {
            Child::Leaf(q) => (
                PauliString::single(n_total, q, Pauli::X),
                PauliString::single(n_total, q, Pauli::Z),
            ),
            Child::Block(b) => ops[b].clone(),
        };
        for block in &self.blocks {
            let children: Vec<_> = block.children.iter().map(|c| child_ops(c, &logical_ops)).collect();
            let lift = |p: &PauliString| {
                let mut out = PauliString::identity(n_total);
                for (j, (cx, cz)) in children.iter().enumerate() {
                    match p.get(j) {
                        Pauli::I => {}
                        Pauli::X => out.mul_assign(cx),
                        Pauli::Z => out.mul_assign(cz),
                        Pauli::Y => {
                            out.mul_assign(cx);
                            out.mul_assign(cz);
                        }
                    }
                }
                out
            };
            gens.extend(self.base.generators().iter().map(lift));
            let (bx, bz) = &self.base.logicals()[0];
            logical_ops.push((lift(bx), lift(bz)));
        }
        let root = logical_ops.pop().expect("at least one block");
        StabilizerCode::new(n_total, gens, vec![root])
    }
}
