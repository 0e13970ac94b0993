//! Game, task, profile, and template catalogs loaded from YAML.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::agent::{AgentProfile, PromptTemplates};
use crate::control::RoleControls;
use crate::eval::TaskSpec;
use crate::kernel::{
    games::GAME_IDS, GameDefinition, Genre, RoleDefinition, DEFAULT_LOADING_TICKS, DEFAULT_TICK_MS, DEFAULT_WINDOW_MS,
};
use crate::semantic::{SemanticControl, SemanticControlMap};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("{file}: {message}")]
    Invalid { file: String, message: String },
    #[error("reading {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },
}

fn invalid(file: &str, message: impl ToString) -> RegistryError {
    RegistryError::Invalid {
        file: file.to_string(),
        message: message.to_string(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RoleFile {
    name: String,
    prompt: String,
    controls_prompt: String,
    #[serde(default)]
    controls: RoleControls,
    #[serde(default)]
    semantic_controls: Vec<SemanticControl>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    game_id: String,
    title: String,
    genre: Genre,
    curriculum_level: u8,
    #[serde(default = "default_tick")]
    tick_period_ms: u64,
    #[serde(default = "default_loading")]
    loading_ticks: u32,
    #[serde(default = "default_window")]
    execution_window_ms: u64,
    rules: String,
    roles: Vec<RoleFile>,
}

fn default_tick() -> u64 {
    DEFAULT_TICK_MS
}
fn default_loading() -> u32 {
    DEFAULT_LOADING_TICKS
}
fn default_window() -> u64 {
    DEFAULT_WINDOW_MS
}

fn yaml<T: serde::de::DeserializeOwned>(file: &str, text: &str) -> Result<T, RegistryError> {
    let de = serde_yaml::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| invalid(file, e))
}

pub fn parse_game(file: &str, text: &str) -> Result<GameDefinition, RegistryError> {
    let g: GameFile = yaml(file, text)?;
    let roles = g
        .roles
        .into_iter()
        .map(|r| {
            Ok(RoleDefinition {
                controls: r.controls.normalized().map_err(|e| invalid(file, format!("role {}: {e}", r.name)))?,
                semantic: SemanticControlMap::new(r.semantic_controls).map_err(|e| invalid(file, e))?,
                name: r.name,
                prompt: r.prompt,
                controls_prompt: r.controls_prompt,
            })
        })
        .collect::<Result<Vec<_>, RegistryError>>()?;
    let def = GameDefinition {
        game_id: g.game_id,
        title: g.title,
        genre: g.genre,
        curriculum_level: g.curriculum_level,
        tick_period_ms: g.tick_period_ms,
        loading_ticks: g.loading_ticks,
        execution_window_ms: g.execution_window_ms,
        rules_text: g.rules,
        roles,
    };
    def.check().map_err(|e| invalid(file, e))?;
    Ok(def)
}

/// Task files omit the fields inherited from their game.
pub fn parse_tasks(file: &str, text: &str, game: &GameDefinition) -> Result<Vec<TaskSpec>, RegistryError> {
    let docs: Vec<serde_json::Map<String, Value>> = yaml(file, text)?;
    let mut out = Vec::with_capacity(docs.len());
    for mut doc in docs {
        doc.entry("game_id").or_insert_with(|| Value::from(game.game_id.clone()));
        doc.entry("genre").or_insert_with(|| Value::from(game.genre.as_str()));
        doc.entry("curriculum_level").or_insert_with(|| Value::from(game.curriculum_level));
        let task: TaskSpec = serde_json::from_value(Value::Object(doc)).map_err(|e| invalid(file, e))?;
        if task.game_id != game.game_id {
            return Err(invalid(file, format!("task {} names game {}", task.task_id, task.game_id)));
        }
        task.check().map_err(|e| invalid(file, e))?;
        out.push(task);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Registry {
    games: BTreeMap<String, Arc<GameDefinition>>,
    tasks: BTreeMap<String, Vec<TaskSpec>>,
    profiles: BTreeMap<String, AgentProfile>,
    pub templates: PromptTemplates,
}

macro_rules! bundled_game {
    ($id:literal) => {
        (
            $id,
            include_str!(concat!("../config/games/", $id, "/game.yaml")),
            include_str!(concat!("../config/games/", $id, "/tasks.yaml")),
        )
    };
}

const BUNDLED_GAMES: [(&str, &str, &str); 6] = [
    bundled_game!("g2048"),
    bundled_game!("minesweeper"),
    bundled_game!("snake"),
    bundled_game!("lane-runner"),
    bundled_game!("grid-hop"),
    bundled_game!("mini-mart"),
];
const BUNDLED_PROFILES: &str = include_str!("../config/profiles/profiles.yaml");
const BUNDLED_TEMPLATES: &str = include_str!("../config/templates/prompts.yaml");

pub const BUNDLED_SUITES: [(&str, &str); 2] = [
    ("easy", include_str!("../config/suites/easy.yaml")),
    ("mini-suite", include_str!("../config/suites/mini-suite.yaml")),
];

impl Registry {
    /// The catalog compiled into the binary. Panics only if the bundled
    /// files are malformed, which the test suite rules out.
    pub fn bundled() -> Registry {
        static CELL: OnceLock<Registry> = OnceLock::new();
        CELL.get_or_init(|| {
            let games = BUNDLED_GAMES
                .iter()
                .map(|(id, g, t)| (id.to_string(), g.to_string(), t.to_string()))
                .collect();
            Registry::from_sources(games, BUNDLED_PROFILES, BUNDLED_TEMPLATES).expect("bundled config is valid")
        })
        .clone()
    }

    /// Loads `<dir>/games/<id>/{game,tasks}.yaml`, `<dir>/profiles/profiles.yaml`
    /// and `<dir>/templates/prompts.yaml`.
    pub fn load_dir(dir: &Path) -> Result<Registry, RegistryError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| RegistryError::Io {
                file: p.display().to_string(),
                source,
            })
        };
        let mut games = Vec::new();
        for id in GAME_IDS {
            let base = dir.join("games").join(id);
            games.push((id.to_string(), read(&base.join("game.yaml"))?, read(&base.join("tasks.yaml"))?));
        }
        let profiles = read(&dir.join("profiles/profiles.yaml"))?;
        let templates = read(&dir.join("templates/prompts.yaml"))?;
        Registry::from_sources(games, &profiles, &templates)
    }

    fn from_sources(games: Vec<(String, String, String)>, profiles: &str, templates: &str) -> Result<Registry, RegistryError> {
        let mut reg = Registry {
            games: BTreeMap::new(),
            tasks: BTreeMap::new(),
            profiles: BTreeMap::new(),
            templates: yaml("templates/prompts.yaml", templates)?,
        };
        for (id, game_text, task_text) in games {
            let gfile = format!("games/{id}/game.yaml");
            let def = parse_game(&gfile, &game_text)?;
            if def.game_id != id {
                return Err(invalid(&gfile, format!("declares game_id {}", def.game_id)));
            }
            let tasks = parse_tasks(&format!("games/{id}/tasks.yaml"), &task_text, &def)?;
            reg.tasks.insert(id.clone(), tasks);
            reg.games.insert(id, Arc::new(def));
        }
        let list: Vec<AgentProfile> = yaml("profiles/profiles.yaml", profiles)?;
        for p in list {
            p.check(&reg.templates).map_err(|e| invalid("profiles/profiles.yaml", e))?;
            if reg.profiles.insert(p.agent_id.clone(), p.clone()).is_some() {
                return Err(invalid("profiles/profiles.yaml", format!("duplicate profile {}", p.agent_id)));
            }
        }
        Ok(reg)
    }

    pub fn game(&self, id: &str) -> Option<Arc<GameDefinition>> {
        self.games.get(id).cloned()
    }

    pub fn games(&self) -> impl Iterator<Item = &Arc<GameDefinition>> {
        self.games.values()
    }

    pub fn tasks(&self, game: &str) -> &[TaskSpec] {
        self.tasks.get(game).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn task(&self, game: &str, task_id: &str) -> Option<&TaskSpec> {
        self.tasks(game).iter().find(|t| t.task_id == task_id)
    }

    pub fn profile(&self, id: &str) -> Option<&AgentProfile> {
        self.profiles.get(id)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &AgentProfile> {
        self.profiles.values()
    }

    pub fn insert_profile(&mut self, p: AgentProfile) -> Result<(), RegistryError> {
        p.check(&self.templates).map_err(|e| invalid(&p.agent_id, e))?;
        self.profiles.insert(p.agent_id.clone(), p);
        Ok(())
    }

    pub fn insert_task(&mut self, t: TaskSpec) -> Result<(), RegistryError> {
        if !self.games.contains_key(&t.game_id) {
            return Err(RegistryError::Unknown {
                kind: "game",
                id: t.game_id.clone(),
            });
        }
        t.check().map_err(|e| invalid(&t.task_id, e))?;
        let list = self.tasks.entry(t.game_id.clone()).or_default();
        list.retain(|x| x.task_id != t.task_id);
        list.push(t);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_catalog_is_complete() {
        let reg = Registry::bundled();
        for id in GAME_IDS {
            let g = reg.game(id).unwrap();
            assert_eq!(g.loading_ticks, 3);
            assert_eq!(g.execution_window_ms, 200);
            assert_eq!(reg.tasks(id).len(), 5, "{id}");
            assert_eq!(reg.tasks(id)[0].difficulty.as_deref(), Some("easy"));
        }
        let genres: std::collections::BTreeSet<_> = reg.games().map(|g| g.genre).collect();
        assert_eq!(genres.len(), 5);
        assert!(reg.profile("oracle").is_some());
        assert!(reg.profile("qwen-like").is_some());
    }

    #[test]
    fn tasks_inherit_game_fields() {
        let reg = Registry::bundled();
        let t = reg.task("minesweeper", "t05").unwrap();
        assert_eq!(t.game_id, "minesweeper");
        assert_eq!(t.genre, Genre::Puzzle);
        assert_eq!(t.curriculum_level, 4);
    }

    #[test]
    fn unknown_fields_are_reported_with_paths() {
        let text = "game_id: x\ntitle: X\ngenre: puzzle\ncurriculum_level: 1\nrules: r\nroles:\n  - name: p\n    prompt: p\n    controls_prompt: c\n    colour: red\n";
        let e = parse_game("x.yaml", text).unwrap_err().to_string();
        assert!(e.contains("colour"), "{e}");
        assert!(e.contains("roles[0]"), "{e}");
    }
}
