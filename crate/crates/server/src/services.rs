//! Wiring of the core components according to a [`Config`].

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use iotlens_core::filter::{
    compile, sources, Labeler, ListCatalog, ListInput, OrgTable, PublicSuffixTable,
};
use iotlens_core::packet::{DeviceRegistry, IpDomainMap, PacketEngine};
use iotlens_core::pipeline::Pipeline;
use iotlens_core::sinkhole::{BlockListStore, Sinkhole, SinkholeConfig};
use iotlens_core::store::TelemetryStore;

use crate::api::AppState;
use crate::config::Config;
use crate::events::EventHub;

pub struct Services {
    pub config: Config,
    pub store: Arc<TelemetryStore>,
    pub blocklist: Arc<BlockListStore>,
    pub engine: Arc<PacketEngine>,
    pub hub: EventHub,
}

/// Lists from the catalog whose snapshot files exist; missing ones are reported and skipped.
pub fn catalog_lists(catalog: &Path) -> anyhow::Result<Vec<ListInput>> {
    let cat = ListCatalog::load(catalog)?;
    let dir = catalog.parent().unwrap_or(Path::new("."));
    let mut present = ListCatalog::default();
    for l in cat.lists {
        if dir.join(&l.file).is_file() {
            present.lists.push(l);
        } else {
            tracing::warn!(list = %l.name, "no snapshot; run `iotlens lists refresh`");
        }
    }
    Ok(sources::load_snapshot(&present, dir)?)
}

pub fn build_labeler(config: &Config, extra: Vec<ListInput>) -> anyhow::Result<Labeler> {
    let lc = &config.lists;
    let mut lists = match &lc.catalog {
        Some(c) => catalog_lists(c)?,
        None => Vec::new(),
    };
    for f in &lc.files {
        let text = std::fs::read_to_string(f).with_context(|| format!("reading list {}", f.display()))?;
        let name = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| f.display().to_string());
        let mut input = ListInput::new(name, text);
        input.location = f.display().to_string();
        lists.push(input);
    }
    lists.extend(extra);
    let out = compile(&lists);
    tracing::info!(rules = out.ruleset.len(), lists = lists.len(), warnings = out.warnings.len(), "filter lists compiled");
    let psl = match &lc.psl {
        Some(p) => PublicSuffixTable::parse(&std::fs::read_to_string(p)?, lc.psl_private),
        None if lc.psl_private => PublicSuffixTable::parse(iotlens_core::filter::BUNDLED_PSL, true),
        None => PublicSuffixTable::bundled(),
    };
    let orgs = match &lc.orgs {
        Some(p) => OrgTable::parse(&std::fs::read_to_string(p)?)?,
        None => OrgTable::bundled(),
    };
    Ok(Labeler::new(out.ruleset, psl, orgs, lc.match_mode))
}

impl Services {
    /// `extra` lists are compiled alongside the configured ones.
    pub fn build(config: Config, extra: Vec<ListInput>) -> anyhow::Result<Self> {
        let labeler = Arc::new(build_labeler(&config, extra)?);
        let mode = config.lists.match_mode;
        if let Some(dir) = &config.store.state_dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let blocklist = Arc::new(match config.store.blocklist() {
            Some(p) => BlockListStore::open(p, mode)?,
            None => BlockListStore::in_memory(mode),
        });
        let store = Arc::new(TelemetryStore::new(labeler.clone(), blocklist.snapshot(), config.store.bucket_width_secs));
        if let Some(db) = config.store.database() {
            if store.restore(&db)? {
                tracing::info!(path = %db.display(), "restored telemetry");
                // lists or blocks may have changed while stopped
                store.swap_labeler(labeler);
                store.apply_blocklist(blocklist.snapshot());
            }
        }
        let names: HashMap<String, String> =
            config.devices.iter().filter_map(|d| Some((d.key.clone(), d.name.clone()?))).collect();
        store.set_display_names(names);
        let registry = DeviceRegistry::new(&config.devices, config.capture.auto_discover);
        let engine = Arc::new(PacketEngine::new(registry, Arc::new(IpDomainMap::default())));
        let hub = EventHub::new(config.api.event_buffer);
        Ok(Services { config, store, blocklist, engine, hub })
    }

    pub fn pipeline(&self) -> Pipeline {
        let hub = self.hub.clone();
        Pipeline::new(self.engine.clone(), self.store.clone()).with_observer(Arc::new(move |u| hub.publish_update(u)))
    }

    pub fn app_state(&self) -> AppState {
        AppState::new(self.store.clone(), self.blocklist.clone(), self.hub.clone())
    }

    pub fn sinkhole(&self) -> Sinkhole {
        let s = &self.config.sinkhole;
        let mut cfg = SinkholeConfig::new(s.upstream);
        cfg.timeout = s.timeout();
        cfg.blocking = s.blocking;
        Sinkhole::new(self.blocklist.clone(), cfg)
    }

    /// Persists the store if a state directory is configured.
    pub fn checkpoint(&self) -> anyhow::Result<()> {
        if let Some(db) = self.config.store.database() {
            self.store.checkpoint(&db)?;
        }
        Ok(())
    }
}
