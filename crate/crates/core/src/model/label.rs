//! Option letters: `A..Z`, then `AA, AB, ..` (bijective base 26).

pub fn option_label(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        let rem = (n - 1) % 26;
        out.push(b'A' + rem as u8);
        n = (n - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Inverse of [`option_label`]; `None` for anything that is not an uppercase label.
pub fn label_index(label: &str) -> Option<usize> {
    if label.is_empty() || !label.bytes().all(|b| b.is_ascii_uppercase()) {
        return None;
    }
    let mut n = 0usize;
    for b in label.bytes() {
        n = n.checked_mul(26)?.checked_add((b - b'A') as usize + 1)?;
    }
    Some(n - 1)
}

pub fn option_labels(n: usize) -> Vec<String> {
    (0..n).map(option_label).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_continue_past_z() {
        assert_eq!(option_label(0), "A");
        assert_eq!(option_label(25), "Z");
        assert_eq!(option_label(26), "AA");
        assert_eq!(option_label(27), "AB");
        assert_eq!(option_label(36), "AK");
        assert_eq!(option_label(26 + 26 * 26), "AAA");
    }

    #[test]
    fn index_inverts_label() {
        for i in 0..2000 {
            assert_eq!(label_index(&option_label(i)), Some(i));
        }
        assert_eq!(label_index("a"), None);
        assert_eq!(label_index(""), None);
    }
}
