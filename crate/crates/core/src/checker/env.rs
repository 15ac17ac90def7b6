use std::fmt;

use sha2::{Digest, Sha256};

use crate::markup::{DefPosition, Type};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl Value {
    pub fn ty(self) -> Type {
        match self {
            Value::Int(_) => Type::Int,
            Value::Bool(_) => Type::Bool,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Definition {
    pub ident: String,
    pub ty: Type,
    pub value: Value,
    pub position: DefPosition,
}

/// Definitions in scope, in definition order; each identifier at most once.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Environment {
    defs: Vec<Definition>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn defs(&self) -> &[Definition] {
        &self.defs
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn lookup(&self, ident: &str) -> Option<&Definition> {
        self.defs.iter().find(|d| d.ident == ident)
    }

    /// Adds `def` at the end, shadowing (and returning) any previous
    /// definition of the same identifier.
    pub fn define(&mut self, def: Definition) -> Option<Definition> {
        let previous = self
            .defs
            .iter()
            .position(|d| d.ident == def.ident)
            .map(|i| self.defs.remove(i));
        self.defs.push(def);
        previous
    }

    /// Imports the definitions of `other`. A definition already present
    /// from the same site (diamond imports) is kept in place.
    pub fn merge(&mut self, other: &Environment) {
        for def in &other.defs {
            if self.defs.iter().any(|d| d == def) {
                continue;
            }
            self.define(def.clone());
        }
    }

    /// 64-bit digest over `ident:type:value;` in definition order.
    pub fn env_hash(&self) -> u64 {
        let mut hasher = Sha256::new();
        for d in &self.defs {
            hasher.update(format!("{}:{}:{};", d.ident, d.ty, d.value).as_bytes());
        }
        let digest = hasher.finalize();
        u64::from_be_bytes(digest[..8].try_into().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::NodeName;

    fn def(ident: &str, value: i64, offset: usize) -> Definition {
        Definition {
            ident: ident.into(),
            ty: Type::Int,
            value: Value::Int(value),
            position: DefPosition {
                node: NodeName::new("A.mthy").unwrap(),
                offset,
            },
        }
    }

    #[test]
    fn hash_depends_on_content_and_order() {
        let mut a = Environment::new();
        a.define(def("x", 1, 0));
        a.define(def("y", 2, 10));
        let mut b = Environment::new();
        b.define(def("x", 1, 0));
        b.define(def("y", 2, 10));
        assert_eq!(a.env_hash(), b.env_hash());

        let mut c = Environment::new();
        c.define(def("y", 2, 10));
        c.define(def("x", 1, 0));
        assert_ne!(a.env_hash(), c.env_hash());

        let mut d = b.clone();
        d.define(def("y", 3, 10));
        assert_ne!(a.env_hash(), d.env_hash());
        assert_ne!(Environment::new().env_hash(), a.env_hash());
    }

    #[test]
    fn shadowing_moves_to_end() {
        let mut env = Environment::new();
        env.define(def("x", 1, 0));
        env.define(def("y", 2, 10));
        let prev = env.define(def("x", 5, 20)).unwrap();
        assert_eq!(prev.value, Value::Int(1));
        let order: Vec<_> = env.defs().iter().map(|d| d.ident.as_str()).collect();
        assert_eq!(order, ["y", "x"]);
        assert_eq!(env.lookup("x").unwrap().value, Value::Int(5));
    }

    #[test]
    fn merge_keeps_shared_definitions() {
        let mut base = Environment::new();
        base.define(def("x", 1, 0));
        let mut left = base.clone();
        left.define(def("l", 2, 5));
        let mut right = base.clone();
        right.define(def("r", 3, 7));

        let mut merged = Environment::new();
        merged.merge(&left);
        merged.merge(&right);
        let order: Vec<_> = merged.defs().iter().map(|d| d.ident.as_str()).collect();
        assert_eq!(order, ["x", "l", "r"]);
    }
}
