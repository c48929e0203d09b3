//! Textbook reference implementations of the three string similarity
//! metrics, written independently of the engine for use as test oracles.

/// Dice coefficient over bigram multisets, computed by sorting and merging.
pub fn dice_bigrams(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.len() < 2 || b.len() < 2 {
        return if a == b { 1.0 } else { 0.0 };
    }
    let mut ga: Vec<(char, char)> = a.windows(2).map(|w| (w[0], w[1])).collect();
    let mut gb: Vec<(char, char)> = b.windows(2).map(|w| (w[0], w[1])).collect();
    ga.sort();
    gb.sort();
    let (mut i, mut j, mut shared) = (0, 0, 0);
    while i < ga.len() && j < gb.len() {
        match ga[i].cmp(&gb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    2.0 * shared as f64 / (ga.len() + gb.len()) as f64
}

pub fn jaro(a: &str, b: &str) -> f64 {
    let s1: Vec<char> = a.chars().collect();
    let s2: Vec<char> = b.chars().collect();
    if s1.is_empty() && s2.is_empty() {
        return 1.0;
    }
    if s1.is_empty() || s2.is_empty() {
        return 0.0;
    }
    let window = (s1.len().max(s2.len()) / 2).saturating_sub(1);
    let mut m1 = vec![false; s1.len()];
    let mut m2 = vec![false; s2.len()];
    let mut m = 0usize;
    for i in 0..s1.len() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(s2.len());
        for j in lo..hi {
            if !m2[j] && s1[i] == s2[j] {
                m1[i] = true;
                m2[j] = true;
                m += 1;
                break;
            }
        }
    }
    if m == 0 {
        return 0.0;
    }
    let x: Vec<char> = s1.iter().zip(&m1).filter(|p| *p.1).map(|p| *p.0).collect();
    let y: Vec<char> = s2.iter().zip(&m2).filter(|p| *p.1).map(|p| *p.0).collect();
    let t = x.iter().zip(&y).filter(|(p, q)| p != q).count() as f64 / 2.0;
    let m = m as f64;
    (m / s1.len() as f64 + m / s2.len() as f64 + (m - t) / m) / 3.0
}

/// Winkler's form: boost by the common prefix (at most 4) with scale 0.1,
/// only when the Jaro score exceeds 0.7.
pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let j = jaro(a, b);
    if j <= 0.7 {
        return j;
    }
    let l = a.chars().zip(b.chars()).take(4).take_while(|(x, y)| x == y).count();
    j + l as f64 * 0.1 * (1.0 - j)
}

/// Longest common subsequence length over the longer length (full table).
pub fn lcs_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()] as f64 / longest as f64
}

/// Equal-weight sum of the three metrics.
pub fn score(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    (dice_bigrams(a, b) + jaro_winkler(a, b) + lcs_ratio(a, b)) / 3.0
}

/// Case-insensitive best score against a dotted name and its last segment.
pub fn name_score(query: &str, name: &str) -> f64 {
    let q = query.to_lowercase();
    let short = name.rsplit('.').next().unwrap_or(name);
    score(&q, &name.to_lowercase()).max(score(&q, &short.to_lowercase()))
}
