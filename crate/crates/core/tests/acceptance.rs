//! Acceptance harness: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test -p lapkit --test acceptance`.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::TcpStream;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use lapkit::envcore::{EnvConfig, Environment, StepResult};
use lapkit::envs::{default_config, default_reward_spec, make_env, DeflectSpheresEnv, EnvId, RopeCuttingEnv};
use lapkit::envserver::{write_frame, MessageType, Server, ServerOptions, TcpClient};
use lapkit::kinematics::{ptsd_to_pose, PtsdState, RcmFrame, Vec3};
use lapkit::planner::{deflect_plan_request, rrt_plan, validate_path};
use lapkit::sensors::{depth_to_pointcloud, project, render, CameraModel, CameraSettings, Scene, Shape};
use lapkit::softbody::SoftWorld;
use lapkit::trajstore::{self, Source};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const CHILD_ENV: &str = "LAPKIT_ACCEPTANCE_DIGEST";

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn env_with(id: EnvId, overrides: Value) -> Environment {
    make_env(id, EnvConfig::resolve(id, &overrides).unwrap()).unwrap()
}

fn random_action(env: &Environment, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..env.action_dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn rcm_invariant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let rcm = RcmFrame::new(
            [
                rng.gen_range(-200.0..200.0),
                rng.gen_range(-200.0..200.0),
                rng.gen_range(-200.0..200.0),
            ],
            [
                rng.gen_range(-180.0..180.0),
                rng.gen_range(-90.0..90.0),
                rng.gen_range(-180.0..180.0),
            ],
        );
        let ptsd = PtsdState::new(
            rng.gen_range(-90.0..90.0),
            rng.gen_range(-90.0..90.0),
            rng.gen_range(-180.0..180.0),
            rng.gen_range(0.0..300.0),
        );
        let pose = ptsd_to_pose(&ptsd, &rcm);
        let axis = pose.z_axis();
        let to_rcm = rcm.position() - pose.position;
        let dist = (to_rcm - axis * to_rcm.dot(&axis)).norm();
        worst = worst.max(dist);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-9 && secs < 5.0,
        format!("max line-to-RCM distance {worst:.3e} mm over 1e5 states in {secs:.2} s"),
    )
}

type Mat4 = [[f64; 4]; 4];

fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn rot(axis: usize, deg: f64) -> Mat4 {
    let (s, c) = deg.to_radians().sin_cos();
    match axis {
        0 => [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, -s, 0.0],
            [0.0, s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
        1 => [
            [c, 0.0, s, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [-s, 0.0, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
        _ => [
            [c, -s, 0.0, 0.0],
            [s, c, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
    }
}

fn trans(t: [f64; 3]) -> Mat4 {
    [
        [1.0, 0.0, 0.0, t[0]],
        [0.0, 1.0, 0.0, t[1]],
        [0.0, 0.0, 1.0, t[2]],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn oracle_pose(ptsd: [f64; 4], rcm_pos: [f64; 3], rcm_rot: [f64; 3]) -> Mat4 {
    [
        trans(rcm_pos),
        rot(0, rcm_rot[0]),
        rot(1, rcm_rot[1]),
        rot(2, rcm_rot[2]),
        rot(0, ptsd[0]),
        rot(1, ptsd[1]),
        rot(2, ptsd[2]),
        trans([0.0, 0.0, ptsd[3]]),
    ]
    .iter()
    .fold(trans([0.0; 3]), |acc, m| matmul(&acc, m))
}

fn forward_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let p = [
            rng.gen_range(-180.0..180.0),
            rng.gen_range(-180.0..180.0),
            rng.gen_range(-180.0..180.0),
            rng.gen_range(0.0..300.0),
        ];
        let pos = [
            rng.gen_range(-300.0..300.0),
            rng.gen_range(-300.0..300.0),
            rng.gen_range(-300.0..300.0),
        ];
        let ori = [
            rng.gen_range(-180.0..180.0),
            rng.gen_range(-180.0..180.0),
            rng.gen_range(-180.0..180.0),
        ];
        let expected = oracle_pose(p, pos, ori);
        let pose = ptsd_to_pose(&PtsdState::new(p[0], p[1], p[2], p[3]), &RcmFrame::new(pos, ori));
        let r = pose.rotation();
        for i in 0..3 {
            worst = worst.max((pose.position[i] - expected[i][3]).abs());
            for j in 0..3 {
                worst = worst.max((r[(i, j)] - expected[i][j]).abs());
            }
        }
    }
    check(
        worst < 1e-9,
        format!("max deviation from 4x4 oracle {worst:.3e} over 1e4 inputs"),
    )
}

fn reward_tables() -> Outcome {
    let table = include_str!("fixtures/reward_weights.tsv");
    let mut expected: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for line in table.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        expected
            .entry(cols[0].to_string())
            .or_default()
            .push((cols[1].to_string(), cols[2].to_string()));
    }
    let mut rows = 0;
    for id in EnvId::ALL {
        let rows_expected = &expected[id.as_str()];
        let spec = default_reward_spec(id);
        if spec.0.len() != rows_expected.len() {
            return Err(format!(
                "{id}: {} terms, table has {}",
                spec.0.len(),
                rows_expected.len()
            ));
        }
        for (term, (feature, weight)) in spec.0.iter().zip(rows_expected) {
            let w: f64 = weight.parse().unwrap();
            if term.feature != *feature
                || term.weight.to_bits() != w.to_bits()
                || format!("{:?}", term.weight) != *weight
            {
                return Err(format!(
                    "{id}: {} = {:?}, table {feature} = {weight}",
                    term.feature, term.weight
                ));
            }
            rows += 1;
        }
    }
    Ok(format!("{rows} weights across 5 envs equal the checked-in table"))
}

fn table_c() -> Outcome {
    let mut cases: Vec<(String, EnvConfig, (f64, u32, u64))> = Vec::new();
    for id in [EnvId::Reach, EnvId::TissueManipulation] {
        cases.push((id.to_string(), default_config(id), (0.1, 1, 500)));
    }
    for m in [1u64, 2, 5] {
        let c = EnvConfig::resolve(
            EnvId::DeflectSpheres,
            &json!({"params": {"deflect_spheres": {"deflections_to_win": m}}}),
        )
        .unwrap();
        cases.push((format!("deflect_spheres M={m}"), c, (0.1, 1, 500 * m)));
    }
    for c in [1u64, 3] {
        let cfg = EnvConfig::resolve(
            EnvId::RopeCutting,
            &json!({"params": {"rope_cutting": {"ropes_to_cut": c}}}),
        )
        .unwrap();
        cases.push((format!("rope_cutting C={c}"), cfg, (0.1, 1, 400.max(200 * c))));
    }
    cases.push((
        "thread_in_hole".into(),
        default_config(EnvId::ThreadInHole),
        (0.01, 10, 300),
    ));
    for (name, cfg, (dt, n, limit)) in &cases {
        let s = &cfg.sim;
        let period = s.frame_skip as f64 * s.delta_t_s;
        if s.delta_t_s != *dt || s.frame_skip != *n || s.time_limit != *limit || (period - 0.1).abs() > 1e-9 {
            return Err(format!(
                "{name}: got ({}, {}, {})",
                s.delta_t_s, s.frame_skip, s.time_limit
            ));
        }
    }
    Ok(format!(
        "{} default configs match (dt, N, limit) and N*dt = 0.1 s",
        cases.len()
    ))
}

fn table_d() -> Outcome {
    let mut cases = vec![
        (
            "reach".to_string(),
            make_env(EnvId::Reach, default_config(EnvId::Reach)).unwrap(),
            6,
        ),
        (
            "deflect_spheres".into(),
            make_env(EnvId::DeflectSpheres, default_config(EnvId::DeflectSpheres)).unwrap(),
            29,
        ),
        (
            "tissue_manipulation".into(),
            make_env(EnvId::TissueManipulation, default_config(EnvId::TissueManipulation)).unwrap(),
            9,
        ),
        (
            "thread_in_hole".into(),
            make_env(EnvId::ThreadInHole, default_config(EnvId::ThreadInHole)).unwrap(),
            29,
        ),
    ];
    for r in [5usize, 10] {
        cases.push((
            format!("rope_cutting R={r}"),
            env_with(
                EnvId::RopeCutting,
                json!({"params": {"rope_cutting": {"num_ropes": r}}}),
            ),
            12 + 9 * (r + 1),
        ));
    }
    let mut seen = Vec::new();
    for (name, env, expected) in cases.iter_mut() {
        let obs = env.reset(0).unwrap();
        let len = obs.shape()[0];
        if env.state_dim() != *expected || len != *expected {
            return Err(format!(
                "{name}: state_dim {} observation {len}, expected {expected}",
                env.state_dim()
            ));
        }
        seen.push(format!("{name}={len}"));
    }
    Ok(seen.join(" "))
}

fn expert_rate(id: EnvId, episodes: u64) -> usize {
    let mut env = make_env(id, default_config(id)).unwrap();
    let mut ok = 0;
    for seed in 0..episodes {
        env.reset(seed).unwrap();
        loop {
            let action = env.scripted_expert().unwrap();
            let r = env.step(&action).unwrap();
            if r.terminated || r.truncated {
                ok += usize::from(r.info.success);
                break;
            }
        }
    }
    ok
}

fn expert_solvability() -> Outcome {
    let start = Instant::now();
    let reach = expert_rate(EnvId::Reach, 100);
    let deflect = expert_rate(EnvId::DeflectSpheres, 100);
    let secs = start.elapsed().as_secs_f64();
    check(
        reach >= 95 && deflect >= 80 && secs < 300.0,
        format!("reach {reach}/100, deflect_spheres {deflect}/100 in {secs:.1} s"),
    )
}

fn rope_failure() -> Outcome {
    let mut env = env_with(
        EnvId::RopeCutting,
        json!({"params": {"rope_cutting": {"num_ropes": 5, "ropes_to_cut": 3}}}),
    );
    env.reset(3).unwrap();
    let active = env.task_as::<RopeCuttingEnv>().unwrap().active_rope();
    let inactive: Vec<usize> = (0..5).filter(|&k| k != active).take(3).collect();
    let idle = [0.0, 0.0, 0.0, 0.0, -1.0];
    let mut last = None;
    for (n, &k) in inactive.iter().enumerate() {
        env.task_as_mut::<RopeCuttingEnv>().unwrap().force_cut_rope(k).unwrap();
        let r = env.step(&idle).unwrap();
        if n < 2 && r.terminated {
            return Err(format!("terminated after only {} inactive cuts", n + 1));
        }
        last = Some(r);
    }
    let r = last.unwrap();
    let failed = r
        .info
        .contributions
        .iter()
        .find(|(f, _)| f == "failed_task")
        .map(|(_, v)| *v)
        .unwrap_or(f64::NAN);
    check(
        r.terminated && r.info.failure && !r.info.success && failed == -20.0,
        format!(
            "terminated {} failure {} failed_task contribution {failed}",
            r.terminated, r.info.failure
        ),
    )
}

fn physics_stability() -> Outcome {
    let mut world = SoftWorld::new();
    let points: Vec<Vec3> = (0..10).map(|i| Vec3::new(10.0 * i as f64, 0.0, 100.0)).collect();
    world.add_rope("rope", &points, 1.0, 1.0, 1.0, 0.0, &[0]).unwrap();
    let mut settled_at = None;
    for step in 1..=200 {
        world.step(&[], 0.01, 4, 10).unwrap();
        if settled_at.is_none() && world.max_distance_violation() < 0.01 {
            settled_at = Some(step);
        }
    }
    let final_violation = world.max_distance_violation();
    let tip_drop = 100.0 - world.particles[9].position.z;

    let mut env = make_env(EnvId::ThreadInHole, default_config(EnvId::ThreadInHole)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut episode = 0;
    let mut unstable = 0;
    env.reset(episode).unwrap();
    for _ in 0..10_000 {
        let action = random_action(&env, &mut rng);
        let r = env.step(&action).unwrap();
        if r.info.features.get("unstable_simulation").copied().unwrap_or(0.0) > 0.0 {
            unstable += 1;
        }
        if r.terminated || r.truncated {
            episode += 1;
            env.reset(episode).unwrap();
        }
    }
    check(
        final_violation < 0.01 && tip_drop > 80.0 && unstable == 0,
        format!(
            "rope violation {final_violation:.2e} after 200 steps (below 1% from step {settled_at:?}, tip dropped {tip_drop:.1} mm); thread_in_hole unstable steps {unstable}/10000"
        ),
    )
}

/// SHA-256 of observation and reward streams for a fixed seed and random actions.
fn rollout_digest(id: EnvId) -> String {
    let mut env = make_env(id, default_config(id)).unwrap();
    let mut hasher = Sha256::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    hasher.update(env.reset(7).unwrap().to_bytes());
    for _ in 0..60 {
        let action = random_action(&env, &mut rng);
        let r = env.step(&action).unwrap();
        hasher.update(r.observation.to_bytes());
        hasher.update(r.reward.to_le_bytes());
        if r.terminated || r.truncated {
            break;
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn child_digests() -> Result<String, String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let out = Command::new(exe)
        .env(CHILD_ENV, "1")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn all_digests() -> String {
    EnvId::ALL
        .iter()
        .map(|&id| format!("{id} {}\n", rollout_digest(id)))
        .collect()
}

fn determinism() -> Outcome {
    let a = child_digests()?;
    let b = child_digests()?;
    let local = all_digests();
    check(
        a == b && a == local && a.lines().count() == 5,
        format!(
            "5 envs, digests equal across two child processes and in-process ({})",
            a[..a.len().min(40)].trim()
        ),
    )
}

fn renderer() -> Outcome {
    let res = 64;
    let camera = CameraModel::look_at(
        Vec3::zeros(),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, -1.0, 0.0),
        CameraSettings::default(),
        res,
    );
    let radius = 10.0;
    let mut scene = Scene::default();
    scene.push(
        1,
        [200, 50, 50],
        Shape::Sphere {
            center: Vec3::new(0.0, 0.0, 100.0),
            radius,
        },
    );
    let frame = render(&scene, &camera);
    // The principal point lies on a pixel corner; average the four neighbours.
    let c = res / 2;
    let center_ray_depth = {
        let mut sum = 0.0;
        for (col, row) in [(c - 1, c - 1), (c, c - 1), (c - 1, c), (c, c)] {
            let d = frame.depth_at(col, row) as f64;
            let ray = camera.pixel_ray(col, row);
            let p = ray * d;
            let lateral2 = p.x * p.x + p.y * p.y;
            let analytic = 100.0 - (radius * radius - lateral2).sqrt();
            sum += (d - analytic).abs();
        }
        sum / 4.0
    };
    let cloud = depth_to_pointcloud(&frame, &camera).map_err(|e| e.to_string())?;
    let mut pixels = Vec::new();
    for row in 0..res {
        for col in 0..res {
            if (frame.depth_at(col, row) as f64) < camera.far {
                pixels.push((col, row));
            }
        }
    }
    let mut worst_px: f64 = 0.0;
    for (pt, (col, row)) in cloud.iter().zip(&pixels) {
        let (u, v) = project(&pt.position, &camera).map_err(|e| e.to_string())?;
        worst_px = worst_px
            .max((u - (*col as f64 + 0.5)).abs())
            .max((v - (*row as f64 + 0.5)).abs());
    }
    check(
        center_ray_depth < 0.1 && worst_px < 0.5 && cloud.len() == pixels.len() && !cloud.is_empty(),
        format!(
            "center depth error {center_ray_depth:.4} mm, round trip max {worst_px:.2e} px over {} points",
            cloud.len()
        ),
    )
}

fn planner() -> Outcome {
    let start = Instant::now();
    let mut env = make_env(EnvId::DeflectSpheres, default_config(EnvId::DeflectSpheres)).unwrap();
    let mut valid = 0;
    for seed in 0..100 {
        env.reset(seed).unwrap();
        let task = env.task_as::<DeflectSpheresEnv>().unwrap();
        let request = deflect_plan_request(task, 15.0, seed).map_err(|e| e.to_string())?;
        if let Ok(path) = rrt_plan(&request) {
            if validate_path(&path, &request, request.step_size / 4.0) {
                valid += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        valid == 100 && secs < 60.0,
        format!("{valid}/100 TPSD paths valid at step/4 in {secs:.2} s"),
    )
}

fn protocol() -> Outcome {
    let server = Server::bind("127.0.0.1:0", ServerOptions::default())
        .map_err(|e| e.to_string())?
        .spawn()
        .map_err(|e| e.to_string())?;
    let addr = server.local_addr();
    let mut client = TcpClient::connect(addr).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for id in [EnvId::Reach, EnvId::DeflectSpheres, EnvId::RopeCutting] {
        for seed in [0u64, 1, 2] {
            let mut local = make_env(id, default_config(id)).unwrap();
            let made = client
                .request(MessageType::Make, json!({"env": id}))
                .map_err(|e| e.to_string())?;
            if made.kind != MessageType::Ok {
                return Err(format!("make failed: {:?}", made.payload));
            }
            let reset = client
                .request(MessageType::Reset, json!({"seed": seed}))
                .map_err(|e| e.to_string())?;
            let local_obs = serde_json::to_value(local.reset(seed).unwrap()).unwrap();
            if reset.payload["observation"] != local_obs {
                return Err(format!("{id} seed {seed}: reset observation differs"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..40 {
                let action = random_action(&local, &mut rng);
                let remote = client
                    .request(MessageType::Step, json!({"action": action}))
                    .map_err(|e| e.to_string())?;
                let remote: StepResult = serde_json::from_value(remote.payload).map_err(|e| e.to_string())?;
                let expected = local.step(&action).unwrap();
                if remote != expected || remote.reward.to_bits() != expected.reward.to_bits() {
                    return Err(format!("{id} seed {seed}: step result differs"));
                }
                compared += 1;
                if expected.terminated || expected.truncated {
                    break;
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut fuzz = TcpClient::connect(addr).map_err(|e| e.to_string())?;
    let templates = [
        r#"{"type":"step","id":1,"payload":{"action":[0.1,0.2,0.3]}}"#,
        r#"{"type":"make","id":2,"payload":{"env":"reach","config":{"image_resolution":16}}}"#,
        r#"{"type":"reset","id":3,"payload":{"seed":4}}"#,
        r#"{"type":"render","id":4}"#,
    ];
    let mut bad = 0;
    for n in 0..1000 {
        let body: Vec<u8> = if n % 2 == 0 {
            let len = rng.gen_range(0..256);
            (0..len).map(|_| rng.gen()).collect()
        } else {
            let mut b = templates[n % templates.len()].as_bytes().to_vec();
            for _ in 0..rng.gen_range(1..4) {
                let i = rng.gen_range(0..b.len());
                b[i] = rng.gen();
            }
            b
        };
        let reply = fuzz.send_raw(&body).map_err(|e| format!("fuzz frame {n}: {e}"))?;
        if reply.kind == MessageType::Error {
            bad += 1;
        }
    }
    for _ in 0..20 {
        let mut raw = TcpStream::connect(addr).map_err(|e| e.to_string())?;
        let junk: Vec<u8> = (0..rng.gen_range(1..64)).map(|_| rng.gen()).collect();
        let _ = raw.write_all(&junk);
    }
    let mut huge = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    let _ = write_frame(&mut huge, &[]);
    let _ = huge.write_all(&u32::MAX.to_be_bytes());
    std::thread::sleep(Duration::from_millis(50));
    let alive = fuzz
        .request(MessageType::Hello, Value::Null)
        .map_err(|e| e.to_string())?
        .kind
        == MessageType::Ok
        && client
            .request(MessageType::Hello, Value::Null)
            .map_err(|e| e.to_string())?
            .kind
            == MessageType::Ok;
    server.shutdown().map_err(|e| e.to_string())?;
    check(
        alive,
        format!(
            "{compared} remote steps bitwise equal (3 envs x 3 seeds); 1000 fuzz frames, {bad} rejected, server alive"
        ),
    )
}

fn trajectory_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for id in EnvId::ALL {
        let mut env = make_env(id, default_config(id)).unwrap();
        env.reset(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let record = trajstore::record(&mut env, Source::Agent, |e| Ok(random_action(e, &mut rng)), &mut [])
            .map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{id}.lgtraj"));
        trajstore::write(&record, &path).map_err(|e| e.to_string())?;
        let back = trajstore::read(&path).map_err(|e| e.to_string())?;
        if back != record {
            return Err(format!("{id}: read differs from written"));
        }
        if !trajstore::replay_matches(&back).map_err(|e| e.to_string())? {
            return Err(format!("{id}: replay rewards differ"));
        }
        checked += 1;
    }
    Ok(format!(
        "{checked} envs: write->read equal, replay rewards bitwise equal"
    ))
}

fn main() -> ExitCode {
    if std::env::var_os(CHILD_ENV).is_some() {
        print!("{}", all_digests());
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 13] = [
        ("rcm_invariant", rcm_invariant),
        ("forward_kinematics_oracle", forward_oracle),
        ("reward_tables", reward_tables),
        ("timing_table", table_c),
        ("state_dimensions_table", table_d),
        ("scripted_expert_solvability", expert_solvability),
        ("rope_cutting_failure_logic", rope_failure),
        ("physics_stability", physics_stability),
        ("determinism_end_to_end", determinism),
        ("renderer", renderer),
        ("planner", planner),
        ("protocol", protocol),
        ("trajectory_round_trip", trajectory_round_trip),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} [{secs:.2}s]: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name} [{secs:.2}s]: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", 13 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
