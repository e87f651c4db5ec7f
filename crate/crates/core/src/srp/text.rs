//! Path notation.
//!
//! Canonical form: triples `(source, relation, target)`, transitions
//! `(12.3m, 45°(NE))` or `(0.0m, -)`, steps joined by ` -> `, then a closing
//! sentence naming the destination and the image coordinates. Parsing also
//! accepts spaced units (`10.6 m`), bare cardinals (`52°NE`), `→` arrows and
//! the two-element crossing form `(road, Intersection of ...)`.

use std::fmt::Write as _;

use super::{AnnotatedPath, PathStep, Triple};
use crate::geo::{cardinal8, Cardinal, GeoPoint, Transition};

const CLOSING: &str = "Based on the spatial context, you can reach ";
const CLOSING_AT: &str = " from the current image location at ";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("SRP parse error at character {offset}: {message}")]
pub struct SrpParseError {
    pub offset: usize,
    pub message: String,
}

fn err(offset: usize, message: impl Into<String>) -> SrpParseError {
    SrpParseError {
        offset,
        message: message.into(),
    }
}

fn render_transition(t: &Transition, out: &mut String) {
    match t.bearing_deg {
        None => {
            let _ = write!(out, "({:.1}m, -)", t.distance_m);
        }
        Some(b) => {
            let rounded = (b.round() as i64).rem_euclid(360);
            let c = cardinal8(rounded as f64).map(|c| c.as_str()).unwrap_or("N");
            let _ = write!(out, "({:.1}m, {rounded}°({c}))", t.distance_m);
        }
    }
}

/// The step chain alone, without the closing sentence.
pub fn render_steps(steps: &[PathStep]) -> String {
    let mut out = String::new();
    for (i, step) in steps.iter().enumerate() {
        if i > 0 {
            out.push_str(" -> ");
        }
        match step {
            PathStep::Triple { triple, trailing } => {
                let _ = write!(
                    out,
                    "({}, {}, {})",
                    triple.source, triple.relation, triple.target
                );
                if let Some(t) = trailing {
                    out.push(' ');
                    render_transition(t, &mut out);
                }
            }
            PathStep::Move { transition } => render_transition(transition, &mut out),
        }
    }
    out
}

pub fn render_srp(p: &AnnotatedPath) -> String {
    format!(
        "{}. {CLOSING}{}{CLOSING_AT}({:.4}, {:.4}).",
        render_steps(&p.steps),
        p.destination,
        p.origin.lon(),
        p.origin.lat()
    )
}

/// Parses a transition body such as `2.0m, 342°(N)`. `Ok(None)` means the
/// body does not look like a transition; a body that does but is inconsistent
/// is an error.
fn parse_transition(body: &str, offset: usize) -> Result<Option<Transition>, SrpParseError> {
    let Some((dist, dir)) = body.split_once(',') else {
        return Ok(None);
    };
    let (dist, dir) = (dist.trim(), dir.trim());
    let Some(number) = dist.strip_suffix('m') else {
        return Ok(None);
    };
    let Ok(distance_m) = number.trim().parse::<f64>() else {
        return Ok(None);
    };
    if dir != "-" && !dir.contains('°') {
        return Ok(None);
    }
    if !distance_m.is_finite() || distance_m < 0.0 {
        return Err(err(offset, format!("invalid distance {number:?}")));
    }
    if dir == "-" {
        return Ok(Some(Transition {
            distance_m,
            bearing_deg: None,
        }));
    }
    let (deg, card) = dir.split_once('°').expect("checked above");
    let bearing: f64 = deg
        .trim()
        .parse()
        .map_err(|_| err(offset, format!("invalid bearing {deg:?}")))?;
    let bearing = if bearing == 360.0 { 0.0 } else { bearing };
    let expected = cardinal8(bearing).map_err(|e| err(offset, e.to_string()))?;
    let card = card
        .trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .trim();
    if !card.is_empty() {
        let c = Cardinal::parse(card)
            .ok_or_else(|| err(offset, format!("unknown direction {card:?}")))?;
        if c != expected {
            return Err(err(
                offset,
                format!("direction {card} does not match bearing {bearing}°"),
            ));
        }
    }
    Ok(Some(Transition {
        distance_m,
        bearing_deg: Some(bearing),
    }))
}

/// Parses a bare step chain (no closing sentence). `base` is added to
/// reported offsets.
fn parse_chain(chars: &[char], base: usize) -> Result<Vec<PathStep>, SrpParseError> {
    let mut steps: Vec<PathStep> = Vec::new();
    let mut pos = 0;
    let mut arrow = false;
    let skip_ws = |pos: &mut usize| {
        while *pos < chars.len() && chars[*pos].is_whitespace() {
            *pos += 1;
        }
    };
    loop {
        skip_ws(&mut pos);
        if pos >= chars.len() {
            break;
        }
        if chars[pos] != '(' {
            return Err(err(
                base + pos,
                format!("expected '(' but found {:?}", chars[pos]),
            ));
        }
        let open = pos;
        let close = chars[open..]
            .iter()
            .position(|&c| c == ')')
            .map(|p| open + p)
            .ok_or_else(|| err(base + open, "unclosed tuple"))?;
        // A transition's cardinal is itself parenthesized: "(2.0m, 342°(N))".
        let mut end = close;
        let mut body: String = chars[open + 1..close].iter().collect();
        if body.contains('(') {
            if close + 1 < chars.len() && chars[close + 1] == ')' {
                end = close + 1;
                body.push(')');
            } else {
                return Err(err(base + open, "unbalanced parentheses"));
            }
        }
        pos = end + 1;
        let at = base + open;

        if let Some(t) = parse_transition(&body, at)? {
            match steps.last_mut() {
                Some(PathStep::Triple {
                    trailing: slot @ None,
                    ..
                }) if !arrow => *slot = Some(t),
                Some(PathStep::Move { .. }) => {
                    return Err(err(at, "a move cannot follow another move"))
                }
                Some(_) if !arrow => return Err(err(at, "missing '->' before transition")),
                None => return Err(err(at, "a path must start with a triple")),
                _ => steps.push(PathStep::Move { transition: t }),
            }
        } else {
            if !steps.is_empty() && !arrow {
                return Err(err(at, "missing '->' between steps"));
            }
            let parts: Vec<&str> = body.split(',').map(str::trim).collect();
            let triple = match parts.as_slice() {
                [s, r, t] if !s.is_empty() && !r.is_empty() && !t.is_empty() => Triple {
                    source: s.to_string(),
                    relation: r.to_string(),
                    target: t.to_string(),
                },
                [s, t] if !s.is_empty() && !t.is_empty() => Triple {
                    source: s.to_string(),
                    relation: "intersection".into(),
                    target: t.to_string(),
                },
                _ => {
                    return Err(err(
                        at,
                        format!("expected a triple or transition, found ({body})"),
                    ))
                }
            };
            steps.push(PathStep::Triple {
                triple,
                trailing: None,
            });
        }

        skip_ws(&mut pos);
        arrow = false;
        if pos < chars.len() {
            if chars[pos] == '→' {
                pos += 1;
                arrow = true;
            } else if chars[pos] == '-' && chars.get(pos + 1) == Some(&'>') {
                pos += 2;
                arrow = true;
            }
        }
    }
    if arrow {
        return Err(err(base + chars.len(), "dangling arrow at end of path"));
    }
    if steps.is_empty() {
        return Err(err(base, "empty path"));
    }
    Ok(steps)
}

pub fn parse_srp_steps(text: &str) -> Result<Vec<PathStep>, SrpParseError> {
    let chars: Vec<char> = text.trim_end().trim_end_matches('.').chars().collect();
    parse_chain(&chars, 0)
}

/// Parses a full path with its closing sentence.
pub fn parse_srp(text: &str) -> Result<AnnotatedPath, SrpParseError> {
    let char_at = |byte: usize| text[..byte].chars().count();
    let marker = text
        .find(CLOSING)
        .ok_or_else(|| err(text.chars().count(), "missing closing sentence"))?;
    let chain_text = text[..marker].trim_end();
    let chain_text = chain_text.strip_suffix('.').unwrap_or(chain_text);
    let chars: Vec<char> = chain_text.chars().collect();
    let steps = parse_chain(&chars, 0)?;

    let rest_start = marker + CLOSING.len();
    let rest = &text[rest_start..];
    let at = rest
        .rfind(CLOSING_AT)
        .ok_or_else(|| err(char_at(rest_start), "missing image location"))?;
    let destination = rest[..at].trim().to_string();
    if destination.is_empty() {
        return Err(err(char_at(rest_start), "empty destination"));
    }
    let coord_start = rest_start + at + CLOSING_AT.len();
    let coords = text[coord_start..].trim_end();
    let coords = coords.strip_suffix('.').unwrap_or(coords).trim();
    let inner = coords
        .strip_prefix('(')
        .and_then(|c| c.strip_suffix(')'))
        .ok_or_else(|| err(char_at(coord_start), "expected (lon, lat)"))?;
    let (lon, lat) = inner
        .split_once(',')
        .ok_or_else(|| err(char_at(coord_start), "expected (lon, lat)"))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| err(char_at(coord_start), format!("bad coordinate {s:?}")))
    };
    let origin = GeoPoint::new(parse(lon)?, parse(lat)?)
        .map_err(|e| err(char_at(coord_start), e.to_string()))?;

    let image_id = match steps.first() {
        Some(PathStep::Triple { triple, .. }) => triple.source.clone(),
        _ => return Err(err(0, "a path must start with a triple")),
    };
    let hops = steps.iter().filter(|s| s.is_triple()).count();
    Ok(AnnotatedPath {
        image_id,
        origin,
        steps,
        destination,
        hops,
        nodes: Vec::new(),
        spans: Vec::new(),
    })
}
