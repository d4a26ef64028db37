//! One JSON document per project, replaced by atomic rename.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use super::{Project, ServiceError};

#[derive(Debug)]
pub struct ProjectStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ProjectStore {
    pub fn open(dir: &Path) -> Result<Self, ServiceError> {
        fs::create_dir_all(dir).map_err(|e| ServiceError::storage(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, project_id: &str) -> PathBuf {
        self.dir.join(format!("{project_id}.json"))
    }

    /// Writer lock for one project id.
    pub fn lock(&self, project_id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry(project_id.to_string())
            .or_default()
            .clone()
    }

    pub fn exists(&self, project_id: &str) -> bool {
        self.path(project_id).is_file()
    }

    pub fn load(&self, project_id: &str) -> Result<Project, ServiceError> {
        let path = self.path(project_id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ServiceError::NotFound(format!("project `{project_id}`")))
            }
            Err(e) => return Err(ServiceError::storage(&path, e)),
        };
        serde_json::from_slice(&bytes)
            .map_err(|e| ServiceError::Storage(format!("{}: corrupt project file: {e}", path.display())))
    }

    pub fn save(&self, project: &Project) -> Result<(), ServiceError> {
        let path = self.path(&project.project_id);
        let bytes = serde_json::to_vec_pretty(project).expect("project serializes");
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| ServiceError::storage(&self.dir, e))?;
        tmp.write_all(&bytes).map_err(|e| ServiceError::storage(&path, e))?;
        tmp.as_file().sync_all().map_err(|e| ServiceError::storage(&path, e))?;
        tmp.persist(&path).map_err(|e| ServiceError::storage(&path, e.error))?;
        Ok(())
    }

    /// Ids of all stored projects, sorted.
    pub fn list(&self) -> Result<Vec<String>, ServiceError> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| ServiceError::storage(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}
