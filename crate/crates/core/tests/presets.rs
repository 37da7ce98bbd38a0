use std::path::PathBuf;

use swarmsteer::dictionary::DictionarySpec;
use swarmsteer::harness::DictionarySource;
use swarmsteer::session::SessionConfig;

fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn swarm_preset_file_matches_builtin() {
    let d = DictionarySpec::load(workspace_root().join("presets/swarm60.json")).unwrap();
    assert_eq!(d, DictionarySpec::swarm_preset());
    assert_eq!(d.size(), 60);
}

#[test]
fn session_preset_matches_defaults() {
    let root = workspace_root();
    let mut cfg = SessionConfig::load(root.join("presets/session.json")).unwrap();
    let DictionarySource::File { path } = &cfg.dictionary else {
        panic!("session preset should reference the dictionary file")
    };
    let resolved = DictionarySource::File {
        path: root.join(path),
    }
    .resolve()
    .unwrap();
    assert_eq!(resolved, DictionarySpec::swarm_preset());
    cfg.dictionary = SessionConfig::default().dictionary;
    assert_eq!(
        serde_json::to_value(&cfg).unwrap(),
        serde_json::to_value(SessionConfig::default()).unwrap()
    );
}
