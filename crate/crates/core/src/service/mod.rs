//! Project workflow: claims and drawings in, mappings reviewed, specification out.
//!
//! Every mutation loads the stored project under its per-project lock, checks the
//! caller's `expected_revision`, applies the change to the loaded copy and writes it
//! back atomically. A failed mutation therefore never touches the file on disk.

pub mod config;
pub mod http;
pub mod store;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::{all_features, parse_claims, Claim, ClaimError, ClaimFeature, FeatureId};
use crate::drawings::{
    ingest_drawing_text, validate_name, ComponentPair, ComponentRef, DrawingError, DrawingFigure,
    DrawingPage, RefNumeral,
};
use crate::enrichment::{build_tuple, render_specification, EnrichedTuple, GeneratedSpecification};
use crate::generation::{generate_project, BackendRegistry, GenerationOptions, GenerationResult, TimingSummary};
use crate::mapper::{suggest_mappings, MappingError, MappingSet, Origin, SuggestConfig};

pub use config::ServiceConfig;
pub use store::ProjectStore;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("project `{0}` already exists")]
    DuplicateId(String),
    #[error("{0}")]
    Validation(String),
    #[error("stale revision: expected {expected}, project is at {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error(transparent)]
    Claims(#[from] ClaimError),
    #[error(transparent)]
    Drawings(#[from] DrawingError),
    #[error(transparent)]
    Mapping(MappingError),
    #[error("storage: {0}")]
    Storage(String),
}

impl ServiceError {
    pub(crate) fn storage(path: &Path, e: std::io::Error) -> Self {
        ServiceError::Storage(format!("{}: {e}", path.display()))
    }

    /// Machine-readable error kind used in API responses.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::DuplicateId(_) => "duplicate_id",
            ServiceError::Validation(_) => "validation",
            ServiceError::Conflict { .. } => "conflict",
            ServiceError::Claims(_) => "claims",
            ServiceError::Drawings(_) => "drawings",
            ServiceError::Mapping(MappingError::UnknownFeature(_) | MappingError::UnknownComponent(_)) => "not_found",
            ServiceError::Mapping(_) => "mapping",
            ServiceError::Storage(_) => "storage",
        }
    }
}

impl From<MappingError> for ServiceError {
    fn from(e: MappingError) -> Self {
        ServiceError::Mapping(e)
    }
}

type Result<T> = std::result::Result<T, ServiceError>;

/// A mapping removed because its feature or component changed underneath it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidatedMapping {
    pub feature_id: FeatureId,
    pub component_ref: ComponentRef,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub job_id: String,
    pub backend_id: String,
    pub results: Vec<GenerationResult>,
    pub summary: TimingSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: String,
    pub name: String,
    pub revision: u64,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(default)]
    pub claims: Vec<Claim>,
    #[serde(default)]
    pub figures: Vec<DrawingFigure>,
    #[serde(default)]
    pub mappings: MappingSet,
    /// Mappings dropped by the most recent upload.
    #[serde(default)]
    pub invalidated: Vec<InvalidatedMapping>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub results: Vec<GeneratedSpecification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationRecord>,
}

impl Project {
    pub fn features(&self) -> Vec<ClaimFeature> {
        all_features(&self.claims)
    }

    pub fn components(&self) -> Vec<ComponentPair> {
        self.figures.iter().flat_map(|f| f.components.iter().cloned()).collect()
    }

    pub fn feature(&self, id: FeatureId) -> Option<&ClaimFeature> {
        self.claims.iter().flat_map(|c| c.features.iter()).find(|f| f.id() == id)
    }

    pub fn component(&self, r: &ComponentRef) -> Option<&ComponentPair> {
        self.figures
            .iter()
            .find(|f| f.figure_number == r.figure)
            .and_then(|f| f.component(&r.number))
    }

    /// Problems with referential integrity; empty for a consistent project.
    pub fn integrity_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let mut figures = BTreeSet::new();
        for f in &self.figures {
            if !figures.insert(f.figure_number) {
                errors.push(format!("figure {} appears twice", f.figure_number));
            }
            let mut numbers = BTreeSet::new();
            for c in &f.components {
                if c.figure != f.figure_number {
                    errors.push(format!("component {} filed under figure {}", c.reference(), f.figure_number));
                }
                if !numbers.insert(&c.number) {
                    errors.push(format!("figure {} lists numeral {} twice", f.figure_number, c.number));
                }
            }
        }
        let mut links = BTreeSet::new();
        for e in &self.mappings.entries {
            if self.feature(e.feature_id).is_none() {
                errors.push(format!("mapping references missing feature {}", e.feature_id));
            }
            if self.component(&e.component_ref).is_none() {
                errors.push(format!("mapping references missing component {}", e.component_ref));
            }
            if !links.insert((e.feature_id, e.component_ref.clone())) {
                errors.push(format!("duplicate mapping {} -> {}", e.feature_id, e.component_ref));
            }
        }
        errors
    }

    /// Field-wise comparison ignoring timestamps.
    pub fn equivalent(&self, other: &Project) -> bool {
        let mut a = self.clone();
        a.created_at = other.created_at;
        a.updated_at = other.updated_at;
        a == *other
    }

    fn tuples(&self, allow_unmapped: bool) -> Vec<EnrichedTuple> {
        let by_feature = self.mappings.by_feature();
        let mut tuples = Vec::new();
        for feature in self.features() {
            let mapped: Vec<ComponentPair> = by_feature
                .get(&feature.id())
                .into_iter()
                .flatten()
                .filter_map(|r| self.component(r).cloned())
                .collect();
            if mapped.is_empty() && !allow_unmapped {
                continue;
            }
            let tuple = build_tuple(&feature, &mapped, &self.figures, false)
                .expect("integrity guarantees mapped components have figures");
            tuples.push(tuple);
        }
        tuples
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub project_id: String,
    pub name: String,
    pub revision: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentPatch {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub number: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub project_id: String,
    pub backend_id: String,
    pub status: JobStatus,
    /// Project revision the job generated from.
    pub base_revision: u64,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<TimingSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Specification {
    pub project_id: String,
    pub revision: u64,
    pub sections: Vec<GeneratedSpecification>,
    pub text: String,
}

/// Outcome of a mutation closure: whether the project changed and what to return.
enum Change<T> {
    Changed(T),
    Unchanged(T),
}

#[derive(Default)]
struct Jobs {
    by_id: Mutex<HashMap<String, Job>>,
    finished: Condvar,
}

struct Inner {
    store: ProjectStore,
    registry: BackendRegistry,
    suggest: SuggestConfig,
    generation: GenerationOptions,
    jobs: Jobs,
    next_job: AtomicU64,
}

/// Cheap to clone; clones share the store and the job table.
#[derive(Clone)]
pub struct ProjectService {
    inner: Arc<Inner>,
}

fn slugify(name: &str) -> String {
    let mut slug = String::new();
    for c in name.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_alphanumeric() {
            slug.push(c);
        } else if !slug.ends_with('-') && !slug.is_empty() {
            slug.push('-');
        }
    }
    slug.trim_end_matches('-').chars().take(64).collect::<String>().trim_end_matches('-').to_string()
}

fn validate_project_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.starts_with(|c: char| c.is_ascii_lowercase() || c.is_ascii_digit())
        && id.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::Validation(format!(
            "project id `{id}` must be 1-64 characters of a-z, 0-9 and '-'"
        )))
    }
}

impl ProjectService {
    pub fn new(store: ProjectStore, registry: BackendRegistry, suggest: SuggestConfig, generation: GenerationOptions) -> Self {
        Self {
            inner: Arc::new(Inner {
                store,
                registry,
                suggest,
                generation,
                jobs: Jobs::default(),
                next_job: AtomicU64::new(1),
            }),
        }
    }

    pub fn from_config(config: &ServiceConfig) -> std::result::Result<Self, String> {
        config.validate().map_err(|e| e.to_string())?;
        let store = ProjectStore::open(&config.data_dir).map_err(|e| e.to_string())?;
        let registry = config.registry().map_err(|e| e.to_string())?;
        Ok(Self::new(store, registry, config.suggest(), config.generation()))
    }

    /// Mock backend only, default parameters.
    pub fn with_mock(data_dir: &Path) -> Result<Self> {
        Ok(Self::new(
            ProjectStore::open(data_dir)?,
            BackendRegistry::with_mock(),
            SuggestConfig::default(),
            GenerationOptions::default(),
        ))
    }

    pub fn store(&self) -> &ProjectStore {
        &self.inner.store
    }

    pub fn backends(&self) -> Vec<String> {
        self.inner.registry.ids()
    }

    fn mutate<T>(
        &self,
        project_id: &str,
        expected_revision: Option<u64>,
        f: impl FnOnce(&mut Project) -> Result<Change<T>>,
    ) -> Result<(T, Project)> {
        let lock = self.inner.store.lock(project_id);
        let _guard = lock.lock().unwrap();
        let mut project = self.inner.store.load(project_id)?;
        if let Some(expected) = expected_revision {
            if expected != project.revision {
                return Err(ServiceError::Conflict {
                    expected,
                    actual: project.revision,
                });
            }
        }
        match f(&mut project)? {
            Change::Unchanged(value) => {
                let original = self.inner.store.load(project_id)?;
                Ok((value, original))
            }
            Change::Changed(value) => {
                let errors = project.integrity_errors();
                if !errors.is_empty() {
                    return Err(ServiceError::Validation(errors.join("; ")));
                }
                project.revision += 1;
                project.updated_at = Utc::now();
                self.inner.store.save(&project)?;
                Ok((value, project))
            }
        }
    }

    pub fn create_project(&self, name: &str, project_id: Option<&str>) -> Result<Project> {
        let name = name.trim();
        if name.is_empty() {
            return Err(ServiceError::Validation("project name must not be empty".into()));
        }
        let id = match project_id {
            Some(id) => id.to_string(),
            None => slugify(name),
        };
        validate_project_id(&id)?;
        let lock = self.inner.store.lock(&id);
        let _guard = lock.lock().unwrap();
        if self.inner.store.exists(&id) {
            return Err(ServiceError::DuplicateId(id));
        }
        let now = Utc::now();
        let project = Project {
            project_id: id,
            name: name.to_string(),
            revision: 1,
            created_at: now,
            updated_at: now,
            claims: Vec::new(),
            figures: Vec::new(),
            mappings: MappingSet::default(),
            invalidated: Vec::new(),
            warnings: Vec::new(),
            results: Vec::new(),
            generation: None,
        };
        self.inner.store.save(&project)?;
        Ok(project)
    }

    pub fn get_project(&self, project_id: &str) -> Result<Project> {
        self.inner.store.load(project_id)
    }

    pub fn list_projects(&self) -> Result<Vec<ProjectSummary>> {
        let mut out = Vec::new();
        for id in self.inner.store.list()? {
            if let Ok(p) = self.inner.store.load(&id) {
                out.push(ProjectSummary {
                    project_id: p.project_id,
                    name: p.name,
                    revision: p.revision,
                });
            }
        }
        Ok(out)
    }

    /// Replaces the claims. Mappings whose feature disappeared or changed text are
    /// dropped and listed in `invalidated`.
    pub fn upload_claims(&self, project_id: &str, claim_text: &str, expected_revision: Option<u64>) -> Result<Project> {
        let (_, project) = self.mutate(project_id, expected_revision, |p| {
            let claims = parse_claims(claim_text)?;
            let new_features: HashMap<FeatureId, String> =
                all_features(&claims).into_iter().map(|f| (f.id(), f.text)).collect();
            let mut invalidated = Vec::new();
            p.mappings.entries.retain(|e| {
                let old = p
                    .claims
                    .iter()
                    .flat_map(|c| c.features.iter())
                    .find(|f| f.id() == e.feature_id)
                    .map(|f| f.text.as_str());
                let reason = match new_features.get(&e.feature_id) {
                    None => "feature removed",
                    Some(text) if Some(text.as_str()) != old => "feature text changed",
                    Some(_) => return true,
                };
                invalidated.push(InvalidatedMapping {
                    feature_id: e.feature_id,
                    component_ref: e.component_ref.clone(),
                    reason: reason.to_string(),
                });
                false
            });
            p.warnings = invalidated
                .iter()
                .map(|m| format!("mapping {} -> {} invalidated: {}", m.feature_id, m.component_ref, m.reason))
                .collect();
            p.invalidated = invalidated;
            p.claims = claims;
            Ok(Change::Changed(()))
        })?;
        Ok(project)
    }

    /// Replaces the figures from exported drawing pages. Mappings to components that
    /// disappeared or were renamed are dropped and listed in `invalidated`.
    pub fn upload_drawings(&self, project_id: &str, pages: &[DrawingPage], expected_revision: Option<u64>) -> Result<Project> {
        let (_, project) = self.mutate(project_id, expected_revision, |p| {
            let ingest = ingest_drawing_text(pages)?;
            let old: HashMap<ComponentRef, String> = p
                .components()
                .into_iter()
                .map(|c| (c.reference(), c.name))
                .collect();
            let new: HashMap<ComponentRef, String> = ingest
                .figures
                .iter()
                .flat_map(|f| f.components.iter())
                .map(|c| (c.reference(), c.name.clone()))
                .collect();
            let mut invalidated = Vec::new();
            p.mappings.entries.retain(|e| {
                let reason = match new.get(&e.component_ref) {
                    None => "component removed",
                    Some(name) if old.get(&e.component_ref) != Some(name) => "component renamed",
                    Some(_) => return true,
                };
                invalidated.push(InvalidatedMapping {
                    feature_id: e.feature_id,
                    component_ref: e.component_ref.clone(),
                    reason: reason.to_string(),
                });
                false
            });
            p.warnings = invalidated
                .iter()
                .map(|m| format!("mapping {} -> {} invalidated: {}", m.feature_id, m.component_ref, m.reason))
                .chain(ingest.warnings.iter().map(|w| w.to_string()))
                .collect();
            p.invalidated = invalidated;
            p.figures = ingest.figures.clone();
            Ok(Change::Changed(()))
        })?;
        Ok(project)
    }

    /// Renames or renumbers one component. Mappings follow the component and their
    /// scores are marked stale.
    pub fn patch_component(
        &self,
        project_id: &str,
        figure: u32,
        number: &str,
        patch: &ComponentPatch,
        expected_revision: Option<u64>,
    ) -> Result<Project> {
        let number = RefNumeral::parse(number)?;
        let new_name = patch.name.as_deref().map(validate_name).transpose()?;
        let new_number = patch.number.as_deref().map(RefNumeral::parse).transpose()?;
        let (_, project) = self.mutate(project_id, expected_revision, |p| {
            let old_ref = ComponentRef::new(figure, number.clone());
            let fig = p
                .figures
                .iter_mut()
                .find(|f| f.figure_number == figure)
                .ok_or_else(|| ServiceError::NotFound(format!("figure {figure}")))?;
            if let Some(n) = &new_number {
                if *n != number && fig.component(n).is_some() {
                    return Err(ServiceError::Validation(format!("figure {figure} already has numeral {n}")));
                }
            }
            let component = fig
                .components
                .iter_mut()
                .find(|c| c.number == number)
                .ok_or_else(|| ServiceError::NotFound(format!("component {old_ref}")))?;
            let before = component.clone();
            if let Some(name) = &new_name {
                component.name = name.clone();
            }
            if let Some(n) = &new_number {
                component.number = n.clone();
            }
            if *component == before {
                return Ok(Change::Unchanged(()));
            }
            let new_ref = component.reference();
            fig.components.sort_by(|a, b| a.number.cmp(&b.number));
            for e in p.mappings.entries.iter_mut().filter(|e| e.component_ref == old_ref) {
                e.component_ref = new_ref.clone();
                e.stale = true;
            }
            p.warnings.clear();
            p.invalidated.clear();
            Ok(Change::Changed(()))
        })?;
        Ok(project)
    }

    pub fn patch_figure(
        &self,
        project_id: &str,
        figure: u32,
        brief_description: &str,
        expected_revision: Option<u64>,
    ) -> Result<Project> {
        let (_, project) = self.mutate(project_id, expected_revision, |p| {
            let fig = p
                .figures
                .iter_mut()
                .find(|f| f.figure_number == figure)
                .ok_or_else(|| ServiceError::NotFound(format!("figure {figure}")))?;
            let before = fig.enriched_description.clone();
            fig.set_brief_description(brief_description);
            if fig.enriched_description == before {
                return Ok(Change::Unchanged(()));
            }
            Ok(Change::Changed(()))
        })?;
        Ok(project)
    }

    pub fn suggest_config(&self, threshold: Option<f64>, k: Option<usize>) -> Result<SuggestConfig> {
        let config = SuggestConfig {
            threshold: threshold.unwrap_or(self.inner.suggest.threshold),
            k: k.unwrap_or(self.inner.suggest.k),
        };
        config.validate()?;
        Ok(config)
    }

    /// Suggestions for the project's current features and components; read-only.
    pub fn suggestions(&self, project_id: &str, threshold: Option<f64>, k: Option<usize>) -> Result<MappingSet> {
        let config = self.suggest_config(threshold, k)?;
        let p = self.inner.store.load(project_id)?;
        Ok(suggest_mappings(&p.features(), &p.components(), config)?)
    }

    /// Confirms every current suggestion.
    pub fn accept_suggestions(
        &self,
        project_id: &str,
        threshold: Option<f64>,
        k: Option<usize>,
        expected_revision: Option<u64>,
    ) -> Result<Project> {
        let config = self.suggest_config(threshold, k)?;
        let (_, project) = self.mutate(project_id, expected_revision, |p| {
            let features = p.features();
            let components = p.components();
            let suggested = suggest_mappings(&features, &components, config)?;
            let before = p.mappings.clone();
            for e in suggested.entries {
                if p.mappings.get(e.feature_id, &e.component_ref).is_none() {
                    p.mappings.entries.push(crate::mapper::MappingEntry {
                        origin: Origin::User,
                        ..e
                    });
                }
            }
            Ok(if p.mappings == before {
                Change::Unchanged(())
            } else {
                Change::Changed(())
            })
        })?;
        Ok(project)
    }

    /// Confirms `feature_id -> component_ref`; confirming an existing link is a no-op.
    pub fn put_mapping(
        &self,
        project_id: &str,
        feature_id: FeatureId,
        component_ref: &ComponentRef,
        expected_revision: Option<u64>,
    ) -> Result<Project> {
        let (_, project) = self.mutate(project_id, expected_revision, |p| {
            let feature = p
                .feature(feature_id)
                .cloned()
                .ok_or(MappingError::UnknownFeature(feature_id))?;
            let component = p
                .component(component_ref)
                .cloned()
                .ok_or_else(|| MappingError::UnknownComponent(component_ref.clone()))?;
            if p.mappings.get(feature_id, component_ref).is_some_and(|e| e.origin == Origin::User) {
                return Ok(Change::Unchanged(()));
            }
            p.mappings.confirm(&feature, &component);
            Ok(Change::Changed(()))
        })?;
        Ok(project)
    }

    /// Removes a link; removing a missing link succeeds without a new revision.
    pub fn delete_mapping(
        &self,
        project_id: &str,
        feature_id: FeatureId,
        component_ref: &ComponentRef,
        expected_revision: Option<u64>,
    ) -> Result<Project> {
        let (_, project) = self.mutate(project_id, expected_revision, |p| {
            Ok(if p.mappings.remove(feature_id, component_ref) {
                Change::Changed(())
            } else {
                Change::Unchanged(())
            })
        })?;
        Ok(project)
    }

    fn set_job(&self, job: Job) {
        let finished = job.status.is_finished();
        self.inner.jobs.by_id.lock().unwrap().insert(job.job_id.clone(), job);
        if finished {
            self.inner.jobs.finished.notify_all();
        }
    }

    /// Starts generation in the background and returns the pending job.
    ///
    /// Only features with confirmed mappings are generated unless `allow_unmapped`
    /// is set. An unknown backend yields a job that is already failed.
    pub fn start_generation(&self, project_id: &str, backend_id: &str, allow_unmapped: bool) -> Result<Job> {
        let project = self.inner.store.load(project_id)?;
        let tuples = project.tuples(allow_unmapped);
        if tuples.is_empty() {
            return Err(ServiceError::Validation(if allow_unmapped {
                "project has no claim features".to_string()
            } else {
                "no claim feature has a confirmed mapping; map features or allow unmapped generation".to_string()
            }));
        }
        let n = self.inner.next_job.fetch_add(1, Ordering::Relaxed);
        let mut job = Job {
            job_id: format!("job-{n}"),
            project_id: project_id.to_string(),
            backend_id: backend_id.to_string(),
            status: JobStatus::Pending,
            base_revision: project.revision,
            created_at: Utc::now(),
            finished_at: None,
            error: None,
            summary: None,
        };
        if let Err(e) = self.inner.registry.get(backend_id) {
            job.status = JobStatus::Failed;
            job.error = Some(e.to_string());
            job.finished_at = Some(Utc::now());
            self.set_job(job.clone());
            return Ok(job);
        }
        self.set_job(job.clone());

        let service = self.clone();
        let pending = job.clone();
        std::thread::spawn(move || service.run_job(pending, tuples));
        Ok(job)
    }

    fn run_job(&self, mut job: Job, tuples: Vec<EnrichedTuple>) {
        job.status = JobStatus::Running;
        self.set_job(job.clone());
        let outcome = generate_project(&tuples, &job.backend_id, &self.inner.registry, self.inner.generation)
            .map_err(|e| ServiceError::Validation(e.to_string()))
            .and_then(|generated| {
                let specs: Vec<GeneratedSpecification> = generated
                    .results
                    .iter()
                    .filter(|r| r.is_ok())
                    .map(|r| GeneratedSpecification::from_raw(r.feature_id, &r.raw_output))
                    .collect();
                let summary = generated.summary;
                let record = GenerationRecord {
                    job_id: job.job_id.clone(),
                    backend_id: job.backend_id.clone(),
                    results: generated.results,
                    summary,
                };
                self.mutate(&job.project_id, Some(job.base_revision), |p| {
                    p.results = specs;
                    p.generation = Some(record);
                    Ok(Change::Changed(()))
                })
                .map(|_| summary)
            });
        job.finished_at = Some(Utc::now());
        match outcome {
            Ok(summary) => {
                job.summary = Some(summary);
                if summary.count == 0 {
                    job.status = JobStatus::Failed;
                    job.error = Some("every generation request failed".to_string());
                } else {
                    job.status = JobStatus::Done;
                }
            }
            Err(ServiceError::Conflict { .. }) => {
                job.status = JobStatus::Failed;
                job.error = Some("project changed while generating; results discarded".to_string());
            }
            Err(e) => {
                job.status = JobStatus::Failed;
                job.error = Some(e.to_string());
            }
        }
        self.set_job(job);
    }

    pub fn job(&self, project_id: &str, job_id: &str) -> Result<Job> {
        self.inner
            .jobs
            .by_id
            .lock()
            .unwrap()
            .get(job_id)
            .filter(|j| j.project_id == project_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("job `{job_id}`")))
    }

    /// Blocks until the job finishes or `timeout` passes; returns the latest state.
    pub fn wait_for_job(&self, project_id: &str, job_id: &str, timeout: Duration) -> Result<Job> {
        let deadline = std::time::Instant::now() + timeout;
        let mut jobs = self.inner.jobs.by_id.lock().unwrap();
        loop {
            let job = jobs
                .get(job_id)
                .filter(|j| j.project_id == project_id)
                .cloned()
                .ok_or_else(|| ServiceError::NotFound(format!("job `{job_id}`")))?;
            let now = std::time::Instant::now();
            if job.status.is_finished() || now >= deadline {
                return Ok(job);
            }
            jobs = self.inner.jobs.finished.wait_timeout(jobs, deadline - now).unwrap().0;
        }
    }

    pub fn specification(&self, project_id: &str, numbered: bool) -> Result<Specification> {
        let p = self.inner.store.load(project_id)?;
        Ok(Specification {
            text: render_specification(&p.results, numbered),
            project_id: p.project_id,
            revision: p.revision,
            sections: p.results,
        })
    }

    pub fn export_project(&self, project_id: &str) -> Result<String> {
        let p = self.inner.store.load(project_id)?;
        Ok(serde_json::to_string_pretty(&p).expect("project serializes"))
    }

    /// Stores an exported project. An existing project with the same id is an error
    /// unless `replace` is set.
    pub fn import_project(&self, json: &str, replace: bool) -> Result<Project> {
        let project: Project =
            serde_json::from_str(json).map_err(|e| ServiceError::Validation(format!("invalid project JSON: {e}")))?;
        validate_project_id(&project.project_id)?;
        let errors = project.integrity_errors();
        if !errors.is_empty() {
            return Err(ServiceError::Validation(errors.join("; ")));
        }
        let lock = self.inner.store.lock(&project.project_id);
        let _guard = lock.lock().unwrap();
        if !replace && self.inner.store.exists(&project.project_id) {
            return Err(ServiceError::DuplicateId(project.project_id));
        }
        self.inner.store.save(&project)?;
        Ok(project)
    }
}
