//! Name-keyed registries of interchangeable strategies.
//!
//! Pulse envelopes, ODE steppers and phase-noise models are each a family of
//! variants behind a common trait. Every family has one registry, filled with
//! the built-in variants on first access, so that configuration files and the
//! CLI can select a variant by its string name.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, RwLock};

/// Implemented by every strategy trait object that can live in a [`Registry`].
pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized + Named> {
    family: &'static str,
    entries: RwLock<BTreeMap<&'static str, Arc<T>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {family} '{name}' (available: {available})")]
pub struct UnknownStrategy {
    pub family: &'static str,
    pub name: String,
    pub available: String,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: RwLock::new(BTreeMap::new()),
        }
    }

    /// Registers `item` under its own name, replacing any previous entry.
    pub fn register(&self, item: Arc<T>) {
        let mut entries = self.entries.write().expect("registry lock poisoned");
        entries.insert(item.name(), item);
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>, UnknownStrategy> {
        let entries = self.entries.read().expect("registry lock poisoned");
        entries.get(name).cloned().ok_or_else(|| UnknownStrategy {
            family: self.family,
            name: name.to_string(),
            available: entries.keys().copied().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        let entries = self.entries.read().expect("registry lock poisoned");
        entries.keys().copied().collect()
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}

impl<T: ?Sized + Named> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("names", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Named + Send + Sync {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Named for Hello {
        fn name(&self) -> &'static str {
            "hello"
        }
    }
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hello".into()
        }
    }

    #[test]
    fn lookup_by_name() {
        let reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register(Arc::new(Hello));
        assert_eq!(reg.get("hello").unwrap().greet(), "hello");
        assert_eq!(reg.names(), vec!["hello"]);
    }

    #[test]
    fn unknown_name_lists_alternatives() {
        let reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register(Arc::new(Hello));
        let err = reg.get("bye").err().unwrap();
        assert_eq!(err.family, "greeter");
        assert!(err.to_string().contains("available: hello"));
    }
}
