//! Text formats for instances and matchings.
//!
//! Instance grammar, one item per line, `#` starting a comment line:
//!
//! ```text
//! <n1> <n2>
//! r<i>: <groups>            (n1 lines)
//! h<j>: <capacity>: <groups> (n2 lines)
//! ```
//!
//! A group is a single id or a tie written `( id id ... )`. Matchings are
//! written one resident per line as `r<i> h<j>` or `r<i> -`.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::instance::{
    hospital_name, resident_name, validate_pairs, Hospital, HospitalId, Instance, Matching,
    PreferenceList, PrunedEntry, ResidentId, Violation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    /// 1-based; 0 when the diagnostic is not tied to a line.
    pub line: usize,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "line {}: {}: {}", self.line, sev, self.message)
    }
}

/// Rejected input. Holds every diagnostic, at least one of them an error.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", self.first_error())]
pub struct ParseError {
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl ParseError {
    fn single(line: usize, message: impl Into<String>) -> Self {
        ParseError {
            diagnostics: vec![ParseDiagnostic {
                line,
                severity: Severity::Error,
                message: message.into(),
            }],
        }
    }

    fn first_error(&self) -> String {
        self.diagnostics
            .iter()
            .find(|d| d.severity == Severity::Error)
            .map(ToString::to_string)
            .unwrap_or_default()
    }
}

struct Diagnostics(Vec<ParseDiagnostic>);

impl Diagnostics {
    fn error(&mut self, line: usize, message: impl Into<String>) {
        self.0.push(ParseDiagnostic {
            line,
            severity: Severity::Error,
            message: message.into(),
        });
    }

    fn warn(&mut self, line: usize, message: impl Into<String>) {
        self.0.push(ParseDiagnostic {
            line,
            severity: Severity::Warning,
            message: message.into(),
        });
    }

    fn has_errors(&self) -> bool {
        self.0.iter().any(|d| d.severity == Severity::Error)
    }
}

/// Content lines with their 1-based numbers; blank and comment lines skipped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses `r12` / `h3` into a zero-based index.
fn parse_id(token: &str, prefix: char, bound: usize) -> Result<usize, String> {
    let digits = token
        .strip_prefix(prefix)
        .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
        .ok_or_else(|| format!("expected an id like {prefix}1, found `{token}`"))?;
    let n: usize = digits
        .parse()
        .map_err(|_| format!("id `{token}` out of range"))?;
    if n == 0 || n > bound {
        return Err(format!("unknown id `{token}`"));
    }
    Ok(n - 1)
}

fn parse_groups(body: &str, prefix: char, bound: usize) -> Result<Vec<Vec<usize>>, String> {
    let spaced = body.replace('(', " ( ").replace(')', " ) ");
    let mut groups = Vec::new();
    let mut open: Option<Vec<usize>> = None;
    let mut seen = vec![false; bound];
    for tok in spaced.split_whitespace() {
        match tok {
            "(" => {
                if open.is_some() {
                    return Err("nested `(` in preference list".into());
                }
                open = Some(Vec::new());
            }
            ")" => match open.take() {
                None => return Err("unbalanced `)` in preference list".into()),
                Some(tie) if tie.is_empty() => return Err("empty tie `( )`".into()),
                Some(tie) => groups.push(tie),
            },
            _ => {
                let id = parse_id(tok, prefix, bound)?;
                if std::mem::replace(&mut seen[id], true) {
                    return Err(format!("duplicate entry `{tok}`"));
                }
                match open.as_mut() {
                    Some(tie) => tie.push(id),
                    None => groups.push(vec![id]),
                }
            }
        }
    }
    if open.is_some() {
        return Err("unbalanced `(` in preference list".into());
    }
    Ok(groups)
}

/// Parses the instance grammar. One-sided list entries are pruned and
/// reported as warnings.
pub fn parse_instance(text: &str) -> Result<(Instance, Vec<ParseDiagnostic>), ParseError> {
    let mut lines = content_lines(text);
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| ParseError::single(0, "missing header `<n1> <n2>`"))?;
    let nums: Vec<&str> = header.split_whitespace().collect();
    let parse_count = |s: &str| s.parse::<usize>().ok().filter(|&n| n > 0);
    let (n1, n2) = match nums.as_slice() {
        [a, b] => match (parse_count(a), parse_count(b)) {
            (Some(n1), Some(n2)) => (n1, n2),
            _ => {
                return Err(ParseError::single(
                    header_line,
                    format!("header counts must be positive integers, found `{header}`"),
                ))
            }
        },
        _ => {
            return Err(ParseError::single(
                header_line,
                format!("malformed header `{header}`, expected `<n1> <n2>`"),
            ))
        }
    };

    let mut diags = Diagnostics(Vec::new());
    let mut residents: Vec<Option<(usize, PreferenceList)>> = vec![None; n1];
    let mut hospitals: Vec<Option<(usize, Hospital)>> = vec![None; n2];

    for (ln, line) in lines {
        let Some((label, rest)) = line.split_once(':') else {
            diags.error(ln, format!("expected `r<i>:` or `h<j>:`, found `{line}`"));
            continue;
        };
        let label = label.trim();
        if label.starts_with('r') {
            let r = match parse_id(label, 'r', n1) {
                Ok(r) => r,
                Err(e) => {
                    diags.error(ln, e);
                    continue;
                }
            };
            if residents[r].is_some() {
                diags.error(ln, format!("second line for {label}"));
                continue;
            }
            match parse_groups(rest, 'h', n2) {
                Ok(groups) => residents[r] = Some((ln, PreferenceList::new(groups))),
                Err(e) => diags.error(ln, format!("{label}: {e}")),
            }
        } else if label.starts_with('h') {
            let h = match parse_id(label, 'h', n2) {
                Ok(h) => h,
                Err(e) => {
                    diags.error(ln, e);
                    continue;
                }
            };
            if hospitals[h].is_some() {
                diags.error(ln, format!("second line for {label}"));
                continue;
            }
            let Some((cap, list)) = rest.split_once(':') else {
                diags.error(ln, format!("{label}: expected `{label}: <capacity>: <list>`"));
                continue;
            };
            let Ok(capacity) = cap.trim().parse::<u32>() else {
                diags.error(ln, format!("{label}: bad capacity `{}`", cap.trim()));
                continue;
            };
            match parse_groups(list, 'r', n1) {
                Ok(groups) => {
                    hospitals[h] = Some((
                        ln,
                        Hospital {
                            capacity,
                            prefs: PreferenceList::new(groups),
                        },
                    ))
                }
                Err(e) => diags.error(ln, format!("{label}: {e}")),
            }
        } else {
            diags.error(ln, format!("unknown agent label `{label}`"));
        }
    }

    for (r, slot) in residents.iter().enumerate() {
        if slot.is_none() && !diags.has_errors() {
            diags.error(0, format!("missing line for {}", resident_name(r)));
        }
    }
    for (h, slot) in hospitals.iter().enumerate() {
        if slot.is_none() && !diags.has_errors() {
            diags.error(0, format!("missing line for {}", hospital_name(h)));
        }
    }
    if diags.has_errors() {
        return Err(ParseError {
            diagnostics: diags.0,
        });
    }

    let res_lines: Vec<usize> = residents.iter().map(|s| s.as_ref().unwrap().0).collect();
    let hos_lines: Vec<usize> = hospitals.iter().map(|s| s.as_ref().unwrap().0).collect();
    let residents = residents.into_iter().map(|s| s.unwrap().1).collect();
    let hospitals = hospitals.into_iter().map(|s| s.unwrap().1).collect();
    let (inst, pruned) = Instance::with_pruning(residents, hospitals)
        .map_err(|e| ParseError::single(0, e.to_string()))?;
    for p in pruned {
        match p {
            PrunedEntry::HospitalSide(r, h) => diags.warn(
                hos_lines[h],
                format!(
                    "{} lists {} but not vice versa; entry dropped",
                    hospital_name(h),
                    resident_name(r)
                ),
            ),
            PrunedEntry::ResidentSide(r, h) => diags.warn(
                res_lines[r],
                format!(
                    "{} lists {} but not vice versa; entry dropped",
                    resident_name(r),
                    hospital_name(h)
                ),
            ),
        }
    }
    Ok((inst, diags.0))
}

fn write_groups(out: &mut String, list: &PreferenceList, name: fn(usize) -> String) {
    for group in list.groups() {
        out.push(' ');
        if let [single] = group.as_slice() {
            out.push_str(&name(*single));
        } else {
            out.push('(');
            for &id in group {
                out.push(' ');
                out.push_str(&name(id));
            }
            out.push_str(" )");
        }
    }
}

pub fn serialize_instance(inst: &Instance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", inst.n_residents(), inst.n_hospitals());
    for r in 0..inst.n_residents() {
        out.push_str(&resident_name(r));
        out.push(':');
        write_groups(&mut out, inst.resident_prefs(r), hospital_name);
        out.push('\n');
    }
    for (h, hosp) in inst.hospitals().iter().enumerate() {
        let _ = write!(out, "{}: {}:", hospital_name(h), hosp.capacity);
        write_groups(&mut out, &hosp.prefs, resident_name);
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchingParseError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("invalid matching: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Reads matching lines into raw pairs without checking acceptability or
/// capacities. Residents may appear in any order; omitted ones are unmatched.
pub fn parse_matching_pairs(
    text: &str,
    inst: &Instance,
) -> Result<Vec<(ResidentId, HospitalId)>, ParseError> {
    let mut diags = Diagnostics(Vec::new());
    let mut pairs = Vec::new();
    for (ln, line) in content_lines(text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [rt, ht] = toks.as_slice() else {
            diags.error(ln, format!("expected `r<i> h<j>` or `r<i> -`, found `{line}`"));
            continue;
        };
        let r = match parse_id(rt, 'r', inst.n_residents()) {
            Ok(r) => r,
            Err(e) => {
                diags.error(ln, e);
                continue;
            }
        };
        if *ht == "-" {
            continue;
        }
        match parse_id(ht, 'h', inst.n_hospitals()) {
            Ok(h) => pairs.push((r, h)),
            Err(e) => diags.error(ln, e),
        }
    }
    if diags.has_errors() {
        return Err(ParseError {
            diagnostics: diags.0,
        });
    }
    Ok(pairs)
}

/// Parses and validates a matching against `inst`.
pub fn parse_matching(text: &str, inst: &Instance) -> Result<Matching, MatchingParseError> {
    let pairs = parse_matching_pairs(text, inst)?;
    let violations = validate_pairs(inst, &pairs);
    if !violations.is_empty() {
        return Err(MatchingParseError::Invalid(violations));
    }
    Ok(Matching::from_pairs(inst.n_residents(), pairs).expect("validated above"))
}

pub fn serialize_matching(m: &Matching) -> String {
    let mut out = String::new();
    for (r, h) in m.assignment().iter().enumerate() {
        match h {
            Some(h) => {
                let _ = writeln!(out, "{} {}", resident_name(r), hospital_name(*h));
            }
            None => {
                let _ = writeln!(out, "{} -", resident_name(r));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::tests::{figure1, m1};

    pub(crate) const FIGURE1: &str = include_str!("../../../data/figure1.txt");

    #[test]
    fn parses_figure1_with_pruning_warning() {
        let (inst, diags) = parse_instance(FIGURE1).unwrap();
        assert_eq!(inst.num_pairs(), 10);
        assert_eq!(inst, figure1());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert_eq!(diags[0].line, 10);
    }

    #[test]
    fn minimal_instance() {
        let (inst, diags) = parse_instance("1 1\nr1: h1\nh1: 1: r1\n").unwrap();
        assert!(diags.is_empty());
        assert_eq!((inst.n_residents(), inst.n_hospitals(), inst.num_pairs()), (1, 1, 1));
    }

    #[test]
    fn crlf_is_accepted() {
        let (inst, _) = parse_instance("1 1\r\nr1: h1\r\nh1: 1: r1\r\n").unwrap();
        assert_eq!(inst.num_pairs(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cases = [
            ("1 1\nr1: h1 h1\nh1: 1: r1\n", "duplicate entry"),
            ("0 1\nh1: 1:\n", "positive"),
            ("1\nr1:\n", "malformed header"),
            ("1 1\nr1: h2\nh1: 1: r1\n", "unknown id"),
            ("1 1\nr1: ( h1\nh1: 1: r1\n", "unbalanced"),
            ("1 1\nr1: h1 )\nh1: 1: r1\n", "unbalanced"),
            ("1 1\nr1: h1\n", "missing line for h1"),
            ("1 1\nr1: h1\nh1: x: r1\n", "bad capacity"),
        ];
        for (text, needle) in cases {
            let err = parse_instance(text).unwrap_err();
            assert!(
                err.to_string().contains(needle),
                "`{text}` gave `{err}`, expected `{needle}`"
            );
        }
    }

    #[test]
    fn serializes_ties_and_empty_lists() {
        let (inst, _) = parse_instance("2 1\nr1: h1\nr2:\nh1: 1: (r1)\n").unwrap();
        assert_eq!(serialize_instance(&inst), "2 1\nr1: h1\nr2:\nh1: 1: r1\n");
        let text = serialize_instance(&figure1());
        assert!(text.contains("h2: 2: r1 r6 ( r4 r5 )\n"), "{text}");
        let (back, diags) = parse_instance(&text).unwrap();
        assert!(diags.is_empty());
        assert_eq!(back.ranks(), figure1().ranks());
    }

    #[test]
    fn matching_format() {
        let inst = figure1();
        let text = "r1 h1\nr2 h1\nr3 h3\nr4 h2\nr5 h3\nr6 h2\n";
        let m = parse_matching(text, &inst).unwrap();
        assert_eq!(m, m1());
        assert_eq!(serialize_matching(&m), text);

        let m = parse_matching("r1 -\n", &inst).unwrap();
        assert_eq!(m.hospital_of(0), None);

        assert_eq!(
            parse_matching("r2 h3", &inst),
            Err(MatchingParseError::Invalid(vec![Violation::Unacceptable(1, 2)]))
        );
        assert!(matches!(
            parse_matching("r1 h1\nr2 h1\nr3 h1\n", &inst),
            Err(MatchingParseError::Invalid(_))
        ));
        assert!(matches!(
            parse_matching("r9 h1\n", &inst),
            Err(MatchingParseError::Syntax(_))
        ));
    }
}
