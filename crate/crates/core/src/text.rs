//! Character-offset helpers. All offsets in this crate count Unicode scalar
//! values, never bytes.

/// Number of Unicode scalar values in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Byte offset of every char boundary, plus the final `text.len()`.
///
/// `table[i]` is the byte position of char `i`; the table has
/// `char_len(text) + 1` entries.
pub fn boundary_table(text: &str) -> Vec<usize> {
    let mut table: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    table.push(text.len());
    table
}

/// Slice `text` by char offsets `[start, end)`.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[begin..finish])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_by_chars_not_bytes() {
        let text = "Zürich ist schön";
        assert_eq!(char_len(text), 16);
        assert_eq!(char_slice(text, 0, 6), Some("Zürich"));
        assert_eq!(char_slice(text, 11, 16), Some("schön"));
        assert_eq!(char_slice(text, 16, 16), Some(""));
        assert_eq!(char_slice(text, 15, 17), None);
        assert_eq!(char_slice(text, 3, 2), None);
    }

    #[test]
    fn boundary_table_has_sentinel() {
        assert_eq!(boundary_table("aé b"), vec![0, 1, 3, 4, 5]);
        assert_eq!(boundary_table(""), vec![0]);
    }
}
