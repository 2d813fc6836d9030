/// Operation counts of one optimal alignment between a reference and a hypothesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub substitutions: usize,
    /// Symbols present only in the hypothesis.
    pub insertions: usize,
    /// Reference symbols missing from the hypothesis.
    pub deletions: usize,
}

impl Alignment {
    pub fn distance(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

fn table<S: PartialEq>(a: &[S], b: &[S]) -> Vec<Vec<usize>> {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d
}

/// Unit-cost edit distance between two symbol sequences.
pub fn edit_distance<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    // two-row DP; the full table is only needed for alignments
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Backtraces the DP table, preferring diagonal moves on ties.
pub fn align<S: PartialEq>(reference: &[S], hypothesis: &[S]) -> Alignment {
    let d = table(reference, hypothesis);
    let (mut i, mut j) = (reference.len(), hypothesis.len());
    let mut out = Alignment::default();
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                if same {
                    out.matches += 1;
                } else {
                    out.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            out.deletions += 1;
            i -= 1;
        } else {
            out.insertions += 1;
            j -= 1;
        }
    }
    out
}

/// Character edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    edit_distance(&a, &b)
}

/// `1 - levenshtein / max_len`; two empty strings count as identical.
pub fn l_similarity(truth: &str, pred: &str) -> f64 {
    let n = truth.chars().count().max(pred.chars().count());
    if n == 0 {
        log::warn!("l_similarity of two empty strings defined as 1");
        return 1.0;
    }
    1.0 - levenshtein(truth, pred) as f64 / n as f64
}
