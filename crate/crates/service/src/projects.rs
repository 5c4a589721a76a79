//! Projects on disk: `<dir>/<project_id>/scene.json` (the scene document),
//! `project.json` (revision and job history) and an append-only `events.jsonl`
//! recording every accepted change.
//!
//! Changes name the revision they were made against; a stale revision is
//! rejected, and so is any change that would leave the scene invalid.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use streetstage_core::{parse_scene, scene_to_json, validate_scene, Scene, SceneDoc};
use streetstage_core::staging::Diagnostic;
use streetstage_jobs::queue::now_ms;

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("no project {0}")]
    NotFound(String),
    #[error("revision {given} is stale, the project is at {current}")]
    Conflict { given: u64, current: u64 },
    #[error("the change leaves the scene invalid")]
    Invalid(Vec<Diagnostic>),
    #[error("{0}")]
    BadRequest(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Project {
    pub project_id: String,
    pub scene: Scene,
    pub revision: u64,
    pub jobs: Vec<String>,
}

/// The wire and disk form of a project.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectView {
    pub project_id: String,
    pub revision: u64,
    pub jobs: Vec<String>,
    pub scene: SceneDoc,
}

impl From<&Project> for ProjectView {
    fn from(p: &Project) -> Self {
        Self {
            project_id: p.project_id.clone(),
            revision: p.revision,
            jobs: p.jobs.clone(),
            scene: SceneDoc::from_scene(&p.scene),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    project_id: String,
    revision: u64,
    jobs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ChangeRecord<'a> {
    revision: u64,
    at_ms: u64,
    change: &'a str,
}

pub struct ProjectStore {
    dir: PathBuf,
    projects: Mutex<HashMap<String, Arc<Mutex<Project>>>>,
    counter: AtomicU64,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ProjectError + '_ {
    move |source| ProjectError::Io { path: path.to_owned(), source }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ProjectError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path)).map_err(io(path))
}

pub fn check(scene: &Scene) -> Result<(), ProjectError> {
    let diagnostics = validate_scene(scene);
    if diagnostics.is_empty() {
        Ok(())
    } else {
        Err(ProjectError::Invalid(diagnostics))
    }
}

impl ProjectStore {
    /// Opens the store, loading every project found under `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ProjectError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let mut projects = HashMap::new();
        for entry in fs::read_dir(&dir).map_err(io(&dir))? {
            let path = entry.map_err(io(&dir))?.path();
            if !path.join("project.json").exists() {
                continue;
            }
            let meta_path = path.join("project.json");
            let meta: Meta = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(io(&meta_path))?)
                .map_err(|e| ProjectError::BadRequest(format!("{}: {e}", meta_path.display())))?;
            let scene_path = path.join("scene.json");
            let scene = parse_scene(&fs::read_to_string(&scene_path).map_err(io(&scene_path))?)
                .map_err(|e| ProjectError::BadRequest(format!("{}: {e}", scene_path.display())))?;
            let project = Project { project_id: meta.project_id.clone(), scene, revision: meta.revision, jobs: meta.jobs };
            projects.insert(meta.project_id, Arc::new(Mutex::new(project)));
        }
        Ok(Self { dir, projects: Mutex::new(projects), counter: AtomicU64::new(0) })
    }

    fn persist(&self, project: &Project, change: &str) -> Result<(), ProjectError> {
        let dir = self.dir.join(&project.project_id);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        write_atomic(&dir.join("scene.json"), scene_to_json(&project.scene).as_bytes())?;
        let meta = Meta { project_id: project.project_id.clone(), revision: project.revision, jobs: project.jobs.clone() };
        write_atomic(&dir.join("project.json"), &serde_json::to_vec_pretty(&meta).expect("meta serializes"))?;
        let events = dir.join("events.jsonl");
        let mut line = serde_json::to_vec(&ChangeRecord { revision: project.revision, at_ms: now_ms(), change })
            .expect("record serializes");
        line.push(b'\n');
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&events)
            .and_then(|mut f| f.write_all(&line))
            .map_err(io(&events))
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Project>>, ProjectError> {
        self.projects.lock().expect("project map lock").get(id).cloned().ok_or_else(|| ProjectError::NotFound(id.into()))
    }

    pub fn create(&self, scene: Scene) -> Result<Project, ProjectError> {
        check(&scene)?;
        let mut map = self.projects.lock().expect("project map lock");
        let project_id = loop {
            let n = self.counter.fetch_add(1, Ordering::Relaxed);
            let id = format!("p-{:x}-{n}", now_ms());
            if !map.contains_key(&id) && !self.dir.join(&id).exists() {
                break id;
            }
        };
        let project = Project { project_id: project_id.clone(), scene, revision: 1, jobs: Vec::new() };
        self.persist(&project, "created")?;
        map.insert(project_id, Arc::new(Mutex::new(project.clone())));
        Ok(project)
    }

    pub fn get(&self, id: &str) -> Result<Project, ProjectError> {
        Ok(self.entry(id)?.lock().expect("project lock").clone())
    }

    pub fn list(&self) -> Vec<Project> {
        let entries: Vec<_> = self.projects.lock().expect("project map lock").values().cloned().collect();
        let mut out: Vec<Project> = entries.iter().map(|p| p.lock().expect("project lock").clone()).collect();
        out.sort_by(|a, b| a.project_id.cmp(&b.project_id));
        out
    }

    /// Applies `f` to the scene if `revision` is current and the result validates.
    pub fn update(
        &self,
        id: &str,
        revision: u64,
        change: &str,
        f: impl FnOnce(&mut Scene) -> Result<(), ProjectError>,
    ) -> Result<Project, ProjectError> {
        let entry = self.entry(id)?;
        let mut project = entry.lock().expect("project lock");
        if revision != project.revision {
            return Err(ProjectError::Conflict { given: revision, current: project.revision });
        }
        let mut next = project.clone();
        f(&mut next.scene)?;
        check(&next.scene)?;
        next.revision += 1;
        self.persist(&next, change)?;
        *project = next;
        Ok(project.clone())
    }

    /// Records a submitted job. This is not a scene change, so the revision stays.
    pub fn add_job(&self, id: &str, job_id: &str) -> Result<Project, ProjectError> {
        let entry = self.entry(id)?;
        let mut project = entry.lock().expect("project lock");
        if !project.jobs.iter().any(|j| j == job_id) {
            let mut next = project.clone();
            next.jobs.push(job_id.to_owned());
            self.persist(&next, &format!("job {job_id}"))?;
            *project = next;
        }
        Ok(project.clone())
    }
}
