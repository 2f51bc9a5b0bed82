//! Element kinds and filter frameworks known to a pipeline.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::element::ElementFactory;
use crate::filter::{FilterError, FilterPlugin};

pub struct Registry {
    factories: BTreeMap<&'static str, Arc<dyn ElementFactory>>,
    aliases: BTreeMap<&'static str, &'static str>,
    frameworks: RwLock<BTreeMap<String, Arc<dyn FilterPlugin>>>,
}

impl Registry {
    /// A registry with no element kinds and no frameworks.
    pub fn empty() -> Self {
        Registry {
            factories: BTreeMap::new(),
            aliases: BTreeMap::new(),
            frameworks: RwLock::new(BTreeMap::new()),
        }
    }

    /// All built-in element kinds plus the `toy` filter framework.
    pub fn with_builtins() -> Self {
        let mut r = Registry::empty();
        for f in crate::builtin_factories() {
            r.register_element(f);
        }
        r.register_plugin(Arc::new(crate::filter::ToyFramework))
            .expect("fresh registry");
        r
    }

    /// Process-wide registry with the built-ins.
    pub fn shared() -> Arc<Registry> {
        static SHARED: OnceLock<Arc<Registry>> = OnceLock::new();
        SHARED.get_or_init(|| Arc::new(Registry::with_builtins())).clone()
    }

    pub fn register_element(&mut self, factory: Arc<dyn ElementFactory>) {
        for alias in factory.aliases() {
            self.aliases.insert(alias, factory.kind());
        }
        self.factories.insert(factory.kind(), factory);
    }

    /// Adds a filter framework; `tensor_filter framework=<name>` resolves to it.
    pub fn register_plugin(&self, plugin: Arc<dyn FilterPlugin>) -> Result<(), FilterError> {
        let mut map = self.frameworks.write().expect("framework lock");
        let name = plugin.framework_name().to_string();
        if map.contains_key(&name) {
            return Err(FilterError::DuplicateFramework(name));
        }
        map.insert(name, plugin);
        Ok(())
    }

    pub fn framework(&self, name: &str) -> Option<Arc<dyn FilterPlugin>> {
        self.frameworks.read().expect("framework lock").get(name).cloned()
    }

    pub fn framework_names(&self) -> Vec<String> {
        self.frameworks.read().expect("framework lock").keys().cloned().collect()
    }

    /// Canonical kind name, resolving aliases.
    pub fn canonical_kind(&self, kind: &str) -> Option<&'static str> {
        if let Some((k, _)) = self.factories.get_key_value(kind) {
            return Some(k);
        }
        self.aliases.get(kind).copied()
    }

    pub fn factory(&self, kind: &str) -> Option<Arc<dyn ElementFactory>> {
        let canon = self.canonical_kind(kind)?;
        self.factories.get(canon).cloned()
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::with_builtins()
    }
}
