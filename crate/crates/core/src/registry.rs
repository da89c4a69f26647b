//! Name-keyed registries of interchangeable strategies.
//!
//! Each pluggable family (embedding providers, multimodal providers,
//! pagination schemes, t-SNE gradient kernels) exposes a trait; concrete
//! variants are registered under a stable name and built at runtime from
//! configuration.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub type Factory<T, C> = Box<dyn Fn(&C) -> Result<T> + Send + Sync>;

pub struct Registry<T, C> {
    family: &'static str,
    factories: BTreeMap<String, Factory<T, C>>,
}

impl<T, C> Registry<T, C> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            factories: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&C) -> Result<T> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, config: &C) -> Result<T> {
        match self.factories.get(name) {
            Some(factory) => factory(config),
            None => Err(Error::UnknownStrategy {
                registry: self.family,
                name: name.to_string(),
                known: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }
}

impl<T, C> fmt::Debug for Registry<T, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("names", &self.factories.keys().collect::<Vec<_>>())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Plain(String);
    impl Greeter for Plain {
        fn greet(&self) -> String {
            format!("hello {}", self.0)
        }
    }

    #[test]
    fn builds_registered_and_rejects_unknown() {
        let mut reg: Registry<Box<dyn Greeter>, String> = Registry::new("greeter");
        reg.register("plain", |who: &String| Ok(Box::new(Plain(who.clone())) as Box<dyn Greeter>));
        assert_eq!(reg.build("plain", &"x".into()).unwrap().greet(), "hello x");
        let err = reg.build("fancy", &"x".into()).err().unwrap();
        assert!(err.to_string().contains("known: plain"));
        assert_eq!(reg.names().collect::<Vec<_>>(), ["plain"]);
    }
}
