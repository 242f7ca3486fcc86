//! Binary plan table: magic `LGTP`, `u32` version, `u8` index width (4 or
//! 8), then `u64` n_fine, n_coarse, k, seed, start, `f64` epsilon, followed
//! by coarse indices, assignment, neighbours (all at the index width) and
//! `f64` weights. Little-endian throughout.

use super::{TokenizationPlan, TokenizerError};

const MAGIC: &[u8; 4] = b"LGTP";
const VERSION: u32 = 1;

pub fn plan_to_bytes(plan: &TokenizationPlan) -> Vec<u8> {
    let wide = plan.n_fine > u32::MAX as usize;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(if wide { 8 } else { 4 });
    for v in [plan.n_fine as u64, plan.n_coarse() as u64, plan.k as u64, plan.seed, plan.start as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&plan.epsilon.to_le_bytes());
    for table in [&plan.coarse_indices, &plan.assignment, &plan.interp_neighbors] {
        for &i in table.iter() {
            if wide {
                out.extend_from_slice(&(i as u64).to_le_bytes());
            } else {
                out.extend_from_slice(&(i as u32).to_le_bytes());
            }
        }
    }
    for w in &plan.interp_weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TokenizerError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TokenizerError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64, TokenizerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn index(&mut self, width: u8) -> Result<usize, TokenizerError> {
        Ok(match width {
            4 => u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize,
            _ => self.u64()? as usize,
        })
    }
    fn indices(&mut self, width: u8, n: usize) -> Result<Vec<usize>, TokenizerError> {
        (0..n).map(|_| self.index(width)).collect()
    }
}

pub fn plan_from_bytes(bytes: &[u8]) -> Result<TokenizationPlan, TokenizerError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(TokenizerError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(TokenizerError::Format(format!("unsupported version {version}")));
    }
    let width = c.take(1)?[0];
    if width != 4 && width != 8 {
        return Err(TokenizerError::Format(format!("index width {width}")));
    }
    let n_fine = c.u64()? as usize;
    let n_coarse = c.u64()? as usize;
    let k = c.u64()? as usize;
    let seed = c.u64()?;
    let start = c.u64()? as usize;
    let epsilon = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let rows = n_fine.checked_mul(k).ok_or_else(|| TokenizerError::Format("size overflow".into()))?;
    let needed = (n_coarse as u128 + n_fine as u128 + rows as u128) * width as u128 + rows as u128 * 8;
    if needed != (bytes.len() - c.pos) as u128 {
        return Err(TokenizerError::Format(format!(
            "payload has {} bytes, header implies {needed}",
            bytes.len() - c.pos
        )));
    }
    let coarse_indices = c.indices(width, n_coarse)?;
    let assignment = c.indices(width, n_fine)?;
    let interp_neighbors = c.indices(width, rows)?;
    let interp_weights = (0..rows)
        .map(|_| c.take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))))
        .collect::<Result<Vec<_>, _>>()?;
    let plan = TokenizationPlan {
        n_fine,
        seed,
        start,
        k,
        epsilon,
        coarse_indices,
        assignment,
        interp_neighbors,
        interp_weights,
    };
    plan.validate()?;
    Ok(plan)
}
