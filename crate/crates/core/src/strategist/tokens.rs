//! Bracketed `KEY=VALUE` token lines describing one persona, e.g.
//! `[DISEASE=Schizophrenia] [VAR_1=COWAT>12] [VAR_2=Curiosity=High] [OUTCOME=Responder] [P_VALUE=0.004]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persona::{Bound, Persona, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenContext {
    pub disease: String,
    pub responder_label: String,
    pub non_responder_label: String,
}

impl TokenContext {
    pub fn new(disease: impl Into<String>) -> Self {
        TokenContext {
            disease: disease.into(),
            responder_label: "Responder".into(),
            non_responder_label: "Non-Responder".into(),
        }
    }

    pub fn label(&self, role: Role) -> &str {
        match role {
            Role::Responder => &self.responder_label,
            Role::NonResponder => &self.non_responder_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenCondition {
    pub name: String,
    pub bound: Bound,
}

/// Everything a token line carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPersona {
    pub disease: String,
    pub conditions: Vec<TokenCondition>,
    pub outcome: String,
    pub p_value: f64,
    pub stability: Option<f64>,
    pub n: Option<usize>,
}

impl TokenPersona {
    /// Fields of a persona as a token line would carry them (the p-value
    /// rounded to its printed precision).
    pub fn from_persona(persona: &Persona, ctx: &TokenContext, extended: bool) -> Result<Self> {
        let p_text = format_p(persona.p_value);
        Ok(TokenPersona {
            disease: ctx.disease.clone(),
            conditions: persona
                .conditions
                .iter()
                .map(|c| TokenCondition {
                    name: c.name.clone(),
                    bound: c.bound.clone(),
                })
                .collect(),
            outcome: ctx.label(persona.role).to_string(),
            p_value: p_text.parse().expect("formatted p-value parses"),
            stability: if extended { persona.stability } else { None },
            n: extended.then_some(persona.member_count),
        })
    }
}

/// Three decimals, or two significant digits in scientific notation below
/// 0.001.
pub fn format_p(p: f64) -> String {
    if p >= 0.001 {
        format!("{p:.3}")
    } else {
        format!("{p:.1e}")
    }
}

fn check_text(what: &str, s: &str, forbidden: &[char]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidInput(format!("token {what} is empty")));
    }
    if let Some(c) = s.chars().find(|c| forbidden.contains(c) || c.is_control()) {
        return Err(Error::InvalidInput(format!(
            "token {what} `{s}` contains reserved character {c:?}"
        )));
    }
    Ok(())
}

fn check_number(v: f64) -> Result<String> {
    if v.is_finite() {
        Ok(format!("{v}"))
    } else {
        Err(Error::InvalidInput(format!("non-finite threshold {v}")))
    }
}

fn encode_condition(c: &TokenCondition) -> Result<String> {
    check_text("variable name", &c.name, &['[', ']', '<', '>', '='])?;
    if c.name.contains("inRange(") {
        return Err(Error::InvalidInput(format!(
            "variable name `{}` contains `inRange(`",
            c.name
        )));
    }
    Ok(match &c.bound {
        Bound::Gt { value } => format!("{}>{}", c.name, check_number(*value)?),
        Bound::Lt { value } => format!("{}<{}", c.name, check_number(*value)?),
        Bound::Between { low, high } => format!(
            "{}inRange({},{})",
            c.name,
            check_number(*low)?,
            check_number(*high)?
        ),
        Bound::Equals { level } => {
            check_text("level", level, &['[', ']'])?;
            format!("{}={}", c.name, level)
        }
    })
}

pub fn encode_skeleton(t: &TokenPersona) -> Result<String> {
    check_text("disease", &t.disease, &['[', ']'])?;
    check_text("outcome", &t.outcome, &['[', ']'])?;
    if t.conditions.is_empty() {
        return Err(Error::InvalidInput("persona without conditions".into()));
    }
    let mut parts = vec![format!("[DISEASE={}]", t.disease)];
    for (i, c) in t.conditions.iter().enumerate() {
        parts.push(format!("[VAR_{}={}]", i + 1, encode_condition(c)?));
    }
    parts.push(format!("[OUTCOME={}]", t.outcome));
    parts.push(format!("[P_VALUE={}]", format_p(t.p_value)));
    if let Some(s) = t.stability {
        parts.push(format!("[STABILITY={}]", check_number(s)?));
    }
    if let Some(n) = t.n {
        parts.push(format!("[N={n}]"));
    }
    Ok(parts.join(" "))
}

/// Token line for a persona. `extended` adds the optional stability and
/// member-count tokens.
pub fn encode_tokens(persona: &Persona, ctx: &TokenContext, extended: bool) -> Result<String> {
    encode_skeleton(&TokenPersona::from_persona(persona, ctx, extended)?)
}

fn perr(offset: usize, message: impl Into<String>) -> Error {
    Error::TokenParse {
        offset,
        message: message.into(),
    }
}

fn parse_number(s: &str, offset: usize) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| perr(offset, format!("bad number `{s}`")))
}

fn parse_condition(v: &str, offset: usize) -> Result<TokenCondition> {
    let Some(i) = v.find(['<', '>', '=']) else {
        let Some(start) = v.find("inRange(") else {
            return Err(perr(offset, format!("condition `{v}` has no operator")));
        };
        let name = &v[..start];
        let args = v[start + 8..]
            .strip_suffix(')')
            .ok_or_else(|| perr(offset + v.len(), "unterminated inRange"))?;
        let (a, b) = args
            .split_once(',')
            .ok_or_else(|| perr(offset + start, "inRange needs two bounds"))?;
        if name.is_empty() {
            return Err(perr(offset, "empty variable name"));
        }
        let arg_at = offset + start + 8;
        return Ok(TokenCondition {
            name: name.to_string(),
            bound: Bound::Between {
                low: parse_number(a, arg_at)?,
                high: parse_number(b, arg_at + a.len() + 1)?,
            },
        });
    };
    let name = &v[..i];
    if name.is_empty() {
        return Err(perr(offset, "empty variable name"));
    }
    let rest = &v[i + 1..];
    let at = offset + i + 1;
    let bound = match v.as_bytes()[i] {
        b'>' => Bound::Gt {
            value: parse_number(rest, at)?,
        },
        b'<' => Bound::Lt {
            value: parse_number(rest, at)?,
        },
        _ => {
            if rest.is_empty() {
                return Err(perr(at, "empty level"));
            }
            Bound::Equals {
                level: rest.to_string(),
            }
        }
    };
    Ok(TokenCondition {
        name: name.to_string(),
        bound,
    })
}

/// Inverse of [`encode_skeleton`]. Errors carry the byte offset of the
/// offending text.
pub fn parse_tokens(line: &str) -> Result<TokenPersona> {
    let bytes = line.as_bytes();
    let mut pos = 0;
    let mut disease = None;
    let mut outcome = None;
    let mut p_value = None;
    let mut stability = None;
    let mut n = None;
    let mut vars: Vec<(usize, TokenCondition)> = Vec::new();
    let mut first = true;
    while pos < bytes.len() {
        if !first {
            if bytes[pos] != b' ' {
                return Err(perr(pos, "expected a space between tokens"));
            }
            pos += 1;
        }
        first = false;
        if bytes.get(pos) != Some(&b'[') {
            return Err(perr(pos, "expected `[`"));
        }
        let close = line[pos..]
            .find(']')
            .map(|k| pos + k)
            .ok_or_else(|| perr(pos, "unterminated token"))?;
        let body = &line[pos + 1..close];
        let body_at = pos + 1;
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| perr(body_at, format!("token `{body}` has no `=`")))?;
        let value_at = body_at + key.len() + 1;
        let dup = |k: &str| perr(pos, format!("duplicate key {k}"));
        match key {
            "DISEASE" => {
                if disease.replace(value.to_string()).is_some() {
                    return Err(dup(key));
                }
            }
            "OUTCOME" => {
                if outcome.replace(value.to_string()).is_some() {
                    return Err(dup(key));
                }
            }
            "P_VALUE" => {
                if p_value.replace(parse_number(value, value_at)?).is_some() {
                    return Err(dup(key));
                }
            }
            "STABILITY" => {
                if stability.replace(parse_number(value, value_at)?).is_some() {
                    return Err(dup(key));
                }
            }
            "N" => {
                let v = value
                    .parse::<usize>()
                    .map_err(|_| perr(value_at, format!("bad count `{value}`")))?;
                if n.replace(v).is_some() {
                    return Err(dup(key));
                }
            }
            k if k.starts_with("VAR_") => {
                let idx: usize = k[4..]
                    .parse()
                    .ok()
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| perr(body_at, format!("bad variable index in `{k}`")))?;
                if vars.iter().any(|(i, _)| *i == idx) {
                    return Err(perr(pos, format!("duplicate VAR index {idx}")));
                }
                vars.push((idx, parse_condition(value, value_at)?));
            }
            other => return Err(perr(body_at, format!("unknown key `{other}`"))),
        }
        pos = close + 1;
    }
    let end = line.len();
    let disease = disease.ok_or_else(|| perr(end, "missing key DISEASE"))?;
    let outcome = outcome.ok_or_else(|| perr(end, "missing key OUTCOME"))?;
    let p_value = p_value.ok_or_else(|| perr(end, "missing key P_VALUE"))?;
    if vars.is_empty() {
        return Err(perr(end, "missing key VAR_1"));
    }
    vars.sort_by_key(|(i, _)| *i);
    if let Some(k) = vars.iter().enumerate().find(|(k, (i, _))| *i != k + 1) {
        return Err(perr(end, format!("missing key VAR_{}", k.0 + 1)));
    }
    Ok(TokenPersona {
        disease,
        conditions: vars.into_iter().map(|(_, c)| c).collect(),
        outcome,
        p_value,
        stability,
        n,
    })
}
