use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
random_pairs = 500
embed_dim = 4
icvf_hidden = 16
icvf_steps = 40
icvf_batch = 32
disc_hidden = 16
disc_epochs = 1
disc_pretrain_steps = 10
actor_hidden = 16
critic_hidden = 16
replay_batch = 32
start_steps = 100
update_interval = 300
eval_interval = 300
eval_episodes = 2
total_steps = 600
";

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lwail-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("tiny.conf"), TINY).unwrap();
    dir
}

fn lwail(dir: &Path, args: &[&str]) -> Output {
    let conf = dir.join("tiny.conf");
    let out = dir.join("out");
    Command::new(env!("CARGO_BIN_EXE_lwail"))
        .args(args)
        .arg("--config")
        .arg(&conf)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn stages_chain_through_the_output_directory() {
    let dir = workdir("chain");
    let out = dir.join("out");
    assert!(ok(&lwail(&dir, &["gen-data", "--seed", "3"])).contains("500 random transitions, 1 expert trajectories"));
    for f in ["random.dataset", "expert.dataset", "config.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(std::fs::read_to_string(out.join("config.txt")).unwrap().contains("seed = 3"));

    let imitate_early = lwail(&dir, &["imitate", "--seed", "3"]);
    assert!(!imitate_early.status.success());
    assert!(String::from_utf8_lossy(&imitate_early.stderr).contains("missing checkpoint"));

    ok(&lwail(&dir, &["train-icvf", "--seed", "3"]));
    ok(&lwail(&dir, &["pretrain-critic", "--seed", "3", "--dump-pairs"]));
    let pairs = std::fs::read_to_string(out.join("critic_pairs.csv")).unwrap();
    assert!(pairs.starts_with("side,f,reward\n"));
    assert!(pairs.lines().any(|l| l.starts_with("expert,")) && pairs.lines().any(|l| l.starts_with("learner,")));

    assert!(ok(&lwail(&dir, &["imitate", "--seed", "3"])).contains("step 600"));
    let metrics: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("metrics-") && n.ends_with("-s3.csv"))
        .collect();
    assert_eq!(metrics.len(), 1);
    let text = std::fs::read_to_string(out.join(&metrics[0])).unwrap();
    assert!(text.lines().nth(1) == Some("step,mean_return,success,mean_pseudo_reward,dual_gap"));
    assert_eq!(text.lines().count(), 4);

    assert!(ok(&lwail(&dir, &["evaluate", "--seed", "3"])).contains("over 2 episodes"));
    assert!(ok(&lwail(&dir, &["export-embeddings", "--seed", "3"])).contains("embedded states"));
    let header = std::fs::read_to_string(out.join("embeddings.csv")).unwrap();
    assert!(header.starts_with("s0,s1,s2,s3,phi0,phi1,phi2,phi3\n"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn oracle_writes_occupancy_and_plans() {
    let dir = workdir("oracle");
    let stdout = ok(&lwail(&dir, &["oracle"]));
    assert!(stdout.contains("W1 ="));
    let occ = std::fs::read_to_string(dir.join("out/occupancy.csv")).unwrap();
    let total: f64 = occ.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert!(std::fs::read_dir(dir.join("out")).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with("transport_")));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_configuration_is_reported() {
    let dir = workdir("bad");
    std::fs::write(dir.join("tiny.conf"), "no_such_key = 1\n").unwrap();
    let o = lwail(&dir, &["gen-data"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
    std::fs::write(dir.join("tiny.conf"), TINY).unwrap();
    let o = lwail(&dir, &["gen-data", "--set", "update_interval=0"]);
    assert!(!o.status.success());
    std::fs::remove_dir_all(&dir).unwrap();
}
