use crate::error::{Error, Result};

/// Splits `name(a, b, ...)` into its name and numeric arguments.
pub fn parse_descriptor(descriptor: &str) -> Result<(String, Vec<f64>)> {
    let s = descriptor.trim();
    let Some(open) = s.find('(') else {
        return Ok((s.to_string(), Vec::new()));
    };
    if !s.ends_with(')') {
        return Err(Error::invalid(format!("malformed descriptor `{s}`")));
    }
    let name = s[..open].trim().to_string();
    let inner = s[open + 1..s.len() - 1].trim();
    let args = if inner.is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad argument `{a}` in `{s}`"))))
            .collect::<Result<Vec<_>>>()?
    };
    Ok((name, args))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_parsing() {
        assert_eq!(parse_descriptor("random( 3 )").unwrap(), ("random".into(), vec![3.0]));
        assert!(parse_descriptor("xor-bsc(0.1").is_err());
        assert!(parse_descriptor("xor-bsc(a)").is_err());
    }
}
