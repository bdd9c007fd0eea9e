//! Name-keyed registries for interchangeable strategies.
//!
//! Each pluggable family (noise models, target weighting, base losses) exposes
//! a trait plus a `Registry` of factories. Callers pick an implementation by
//! name at runtime, typically from a config file or CLI flag.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{CrofError, Result};

/// Builds a boxed strategy from its construction arguments.
pub type Factory<T, A> = fn(&A) -> Box<T>;

pub struct Registry<T: ?Sized, A = ()> {
    kind: &'static str,
    factories: BTreeMap<&'static str, Factory<T, A>>,
}

impl<T: ?Sized, A> Registry<T, A> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &'static str, factory: Factory<T, A>) -> Self {
        self.register(name, factory);
        self
    }

    /// Adds or replaces the factory under `name`.
    pub fn register(&mut self, name: &'static str, factory: Factory<T, A>) {
        self.factories.insert(name, factory);
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, args: &A) -> Result<Box<T>> {
        match self.factories.get(name) {
            Some(factory) => Ok(factory(args)),
            None => Err(CrofError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }
}

impl<T: ?Sized, A> fmt::Debug for Registry<T, A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names().collect::<Vec<_>>())
            .finish()
    }
}
