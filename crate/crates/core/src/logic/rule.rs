use std::fmt::Write as _;

use crate::datasets::{ConceptSchema, Condition};
use crate::error::{Error, Result};

/// Conjunctive class rule over existentially bound objects. Stored in
/// canonical form: conditions sorted within each object, objects sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rule {
    class: usize,
    objects: Vec<Vec<Condition>>,
}

impl Rule {
    pub fn new(class: usize, mut objects: Vec<Vec<Condition>>) -> Result<Self> {
        if objects.is_empty() || objects.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("rules need objects with at least one condition".into()));
        }
        for obj in &mut objects {
            obj.sort();
            if obj.windows(2).any(|w| w[0].group == w[1].group) {
                return Err(Error::InvalidArgument(format!(
                    "two conditions on one attribute group in {obj:?}"
                )));
            }
        }
        objects.sort();
        Ok(Self { class, objects })
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn objects(&self) -> &[Vec<Condition>] {
        &self.objects
    }

    pub fn num_conditions(&self) -> usize {
        self.objects.iter().map(Vec::len).sum()
    }

    /// Same conditions per object, ignoring the class.
    pub fn same_body(&self, other: &Rule) -> bool {
        self.objects == other.objects
    }

    /// `classK(X):- in(O1,X),group(O1,value),...`
    pub fn to_text(&self, schema: &ConceptSchema) -> String {
        let mut out = format!("class{}(X):-", self.class);
        let mut first = true;
        for (i, obj) in self.objects.iter().enumerate() {
            let var = format!("O{}", i + 1);
            let mut atoms = vec![format!("in({var},X)")];
            for c in obj {
                let g = &schema.groups[c.group];
                atoms.push(format!("{}({var},{})", g.name, g.values[c.value]));
            }
            for a in atoms {
                if !first {
                    out.push(',');
                }
                first = false;
                write!(out, "{a}").unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str, schema: &ConceptSchema) -> Result<Self> {
        let bad = |why: &str| Error::RuleParse(format!("{why}: {text:?}"));
        let text: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let text = text.strip_suffix('.').unwrap_or(&text);
        let (head, body) = text.split_once(":-").ok_or_else(|| bad("missing ':-'"))?;
        let class = head
            .strip_prefix("class")
            .and_then(|h| h.strip_suffix("(X)"))
            .and_then(|k| k.parse::<usize>().ok())
            .ok_or_else(|| bad("head must read classK(X)"))?;
        let mut vars: Vec<String> = Vec::new();
        let mut bound: Vec<bool> = Vec::new();
        let mut objects: Vec<Vec<Condition>> = Vec::new();
        for atom in split_atoms(body).ok_or_else(|| bad("unbalanced parentheses"))? {
            let (pred, args) = atom
                .strip_suffix(')')
                .and_then(|a| a.split_once('('))
                .ok_or_else(|| bad("malformed atom"))?;
            let (var, arg) = args.split_once(',').ok_or_else(|| bad("atoms take two arguments"))?;
            let slot = match vars.iter().position(|v| v == var) {
                Some(s) => s,
                None => {
                    vars.push(var.to_string());
                    bound.push(false);
                    objects.push(Vec::new());
                    vars.len() - 1
                }
            };
            if pred == "in" {
                if arg != "X" {
                    return Err(bad("in/2 must bind to X"));
                }
                bound[slot] = true;
                continue;
            }
            let group = schema.group_index(pred).ok_or_else(|| bad(&format!("unknown attribute {pred}")))?;
            let value = schema
                .value_index(group, arg)
                .ok_or_else(|| bad(&format!("unknown value {arg} for {pred}")))?;
            objects[slot].push(Condition::new(group, value));
        }
        if let Some(i) = bound.iter().position(|b| !b) {
            return Err(bad(&format!("{} has no in/2 atom", vars[i])));
        }
        Rule::new(class, objects).map_err(|e| bad(&e.to_string()))
    }
}

fn split_atoms(body: &str) -> Option<Vec<&str>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in body.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return None;
        }
    }
    if depth != 0 {
        return None;
    }
    out.push(&body[start..]);
    Some(out.into_iter().filter(|a| !a.is_empty()).collect())
}
