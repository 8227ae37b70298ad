/// Levenshtein alignment summary with unit costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditOps {
    pub distance: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl std::ops::AddAssign for EditOps {
    fn add_assign(&mut self, rhs: Self) {
        self.distance += rhs.distance;
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
    }
}

/// Minimum edit distance from `reference` to `hypothesis`, broken down by
/// operation along one optimal alignment.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditOps {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut table = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        table[i * w] = i;
    }
    for j in 0..=m {
        table[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = table[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = table[(i - 1) * w + j] + 1;
            let ins = table[i * w + j - 1] + 1;
            table[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = EditOps {
        distance: table[n * w + m],
        ..EditOps::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = table[i * w + j];
        if i > 0 && j > 0 {
            let mismatch = reference[i - 1] != hypothesis[j - 1];
            if here == table[(i - 1) * w + j - 1] + usize::from(mismatch) {
                ops.substitutions += usize::from(mismatch);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == table[(i - 1) * w + j] + 1 {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    ops
}

/// Edit distance normalised by `max(1, |reference|)`.
pub fn cer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> f64 {
    edit_distance(reference, hypothesis).distance as f64 / reference.len().max(1) as f64
}
