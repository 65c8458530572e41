//! Seeded synthetic conn logs with known device roles.
//!
//! Each role owns a disjoint /24 address pool, a fixed set of listening
//! ports and a protocol. Connections go from an initiating role to one of the
//! roles it talks to, from an ephemeral client port to a listening port. An
//! optional [`AnomalyPlan`] makes one host start originating traffic from an
//! unusual client port (the banking-trojan pattern) after an onset line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::rng::rng_from;
use crate::zeek::{FiveTuple, Proto};
use crate::{Error, Result};

pub const EPHEMERAL_PORTS: std::ops::RangeInclusive<u16> = 49152..=65535;
pub const EXTERNAL_ROLE: &str = "external";

const FIELDS: [&str; 12] = [
    "ts",
    "uid",
    "id.orig_h",
    "id.orig_p",
    "id.resp_h",
    "id.resp_p",
    "proto",
    "service",
    "duration",
    "orig_bytes",
    "resp_bytes",
    "conn_state",
];
const TYPES: [&str; 12] = [
    "time", "string", "addr", "port", "addr", "port", "enum", "string", "interval", "count",
    "count", "string",
];
const BASE_TS: f64 = 1_591_367_999.0;

/// Typical size of a connection served by a role.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceShape {
    pub duration: f64,
    pub orig_bytes: f64,
    pub resp_bytes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleSpec {
    pub name: String,
    /// First three octets of the role's address pool, e.g. `10.0.1`.
    pub subnet: String,
    /// Last octet of the first host; hosts are numbered consecutively.
    pub first_host: u8,
    pub n_hosts: usize,
    pub listen_ports: Vec<u16>,
    pub proto: Proto,
    /// Roles this role initiates connections to.
    pub talks_to: Vec<String>,
    /// Relative share of connections this role initiates.
    pub weight: f64,
    pub shape: ServiceShape,
}

impl RoleSpec {
    pub fn hosts(&self) -> Vec<String> {
        (0..self.n_hosts)
            .map(|i| format!("{}.{}", self.subnet, self.first_host as usize + i))
            .collect()
    }
}

/// Host `host` starts originating connections from client port
/// `anomalous_port` to `remote_h:remote_p` once the base stream reaches
/// line `onset`; `rate` is the number of injected lines per base line.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyPlan {
    pub host: String,
    pub normal_port: u16,
    pub anomalous_port: u16,
    pub onset: usize,
    pub rate: f64,
    pub remote_h: String,
    pub remote_p: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetProfile {
    pub roles: Vec<RoleSpec>,
    pub anomaly: Option<AnomalyPlan>,
    /// Distinct client ports each client/server pair cycles through, drawn
    /// once per pair. Zero draws a fresh port for every connection.
    pub client_ports_per_flow: usize,
    pub seed: u64,
}

#[allow(clippy::too_many_arguments)]
fn role(
    name: &str,
    subnet: &str,
    first_host: u8,
    n_hosts: usize,
    ports: &[u16],
    proto: Proto,
    talks_to: &[&str],
    weight: f64,
    shape: (f64, f64, f64),
) -> RoleSpec {
    RoleSpec {
        name: name.into(),
        subnet: subnet.into(),
        first_host,
        n_hosts,
        listen_ports: ports.to_vec(),
        proto,
        talks_to: talks_to.iter().map(|s| s.to_string()).collect(),
        weight,
        shape: ServiceShape {
            duration: shape.0,
            orig_bytes: shape.1,
            resp_bytes: shape.2,
        },
    }
}

impl NetProfile {
    /// Mail, web, DNS and workstation roles (2 / 3 / 1 / 20 hosts) with the
    /// first mail server turning into a port-8888 beacon halfway through a
    /// stream of `n_lines`.
    pub fn four_role(seed: u64, n_lines: usize) -> Self {
        let roles = vec![
            role(
                "mail",
                "10.0.1",
                25,
                2,
                &[25],
                Proto::Tcp,
                &["dns", "mail"],
                0.12,
                (1.2, 4_000.0, 350.0),
            ),
            role(
                "web",
                "10.0.2",
                80,
                3,
                &[80, 443],
                Proto::Tcp,
                &["dns"],
                0.08,
                (0.35, 600.0, 18_000.0),
            ),
            role(
                "dns",
                "10.0.3",
                53,
                1,
                &[53],
                Proto::Udp,
                &[],
                0.0,
                (0.002, 45.0, 120.0),
            ),
            role(
                "workstation",
                "10.0.10",
                100,
                20,
                &[],
                Proto::Tcp,
                &["mail", "web", "dns"],
                0.8,
                (0.0, 0.0, 0.0),
            ),
        ];
        Self {
            roles,
            anomaly: Some(AnomalyPlan {
                host: "10.0.1.25".into(),
                normal_port: 25,
                anomalous_port: 8888,
                onset: n_lines / 2,
                rate: 0.02,
                remote_h: "203.0.113.66".into(),
                remote_p: 443,
            }),
            client_ports_per_flow: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        let mut subnets = BTreeSet::new();
        for r in &self.roles {
            if !names.insert(r.name.as_str()) || r.name == EXTERNAL_ROLE {
                return Err(Error::Config(format!(
                    "role name `{}` is reserved or repeated",
                    r.name
                )));
            }
            if !subnets.insert(r.subnet.as_str()) {
                return Err(Error::Config(format!(
                    "address pool {} shared by two roles",
                    r.subnet
                )));
            }
            if r.n_hosts == 0 || r.first_host as usize + r.n_hosts > 255 {
                return Err(Error::Config(format!(
                    "role `{}` host range does not fit its /24",
                    r.name
                )));
            }
            if r.listen_ports.contains(&0) {
                return Err(Error::Config(format!(
                    "role `{}` listens on port 0",
                    r.name
                )));
            }
            if !(r.weight >= 0.0 && r.weight.is_finite()) {
                return Err(Error::Config(format!(
                    "role `{}` has invalid weight",
                    r.name
                )));
            }
        }
        for r in &self.roles {
            for t in &r.talks_to {
                let target = self.role(t).ok_or_else(|| {
                    Error::Config(format!("role `{}` talks to unknown `{t}`", r.name))
                })?;
                if target.listen_ports.is_empty() {
                    return Err(Error::Config(format!("role `{t}` has no listening ports")));
                }
            }
        }
        if !self
            .roles
            .iter()
            .any(|r| r.weight > 0.0 && !r.talks_to.is_empty())
        {
            return Err(Error::Config("no role initiates connections".into()));
        }
        if let Some(plan) = &self.anomaly {
            if self.role_of(&plan.host).is_none() {
                return Err(Error::Config(format!(
                    "anomaly host {} is not in the profile",
                    plan.host
                )));
            }
            if plan.anomalous_port == 0 || plan.remote_p == 0 {
                return Err(Error::Config("anomaly ports must be in 1..=65535".into()));
            }
            if !(0.0..=1.0).contains(&plan.rate) {
                return Err(Error::Config(format!(
                    "anomaly rate {} outside [0, 1]",
                    plan.rate
                )));
            }
        }
        Ok(())
    }

    pub fn role(&self, name: &str) -> Option<&RoleSpec> {
        self.roles.iter().find(|r| r.name == name)
    }

    pub fn role_of(&self, addr: &str) -> Option<&RoleSpec> {
        self.roles
            .iter()
            .find(|r| r.hosts().iter().any(|h| h == addr))
    }

    /// Every profile address with its role, in profile order.
    pub fn address_roles(&self) -> Vec<(String, String)> {
        self.roles
            .iter()
            .flat_map(|r| r.hosts().into_iter().map(move |h| (h, r.name.clone())))
            .collect()
    }
}

/// A generated connection before rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConn {
    pub ts: f64,
    pub uid: String,
    pub tuple: FiveTuple,
    pub duration: String,
    pub orig_bytes: String,
    pub resp_bytes: String,
    pub conn_state: String,
    pub orig_role: String,
    pub resp_role: String,
}

impl SynthConn {
    pub fn role_pair(&self) -> String {
        format!("{}>{}", self.orig_role, self.resp_role)
    }

    fn tsv_row(&self) -> String {
        let t = &self.tuple;
        format!(
            "{:.6}\t{}\t{}\t{}\t{}\t{}\t{}\t-\t{}\t{}\t{}\t{}",
            self.ts,
            self.uid,
            t.orig_h,
            t.orig_p,
            t.resp_h,
            t.resp_p,
            t.proto,
            self.duration,
            self.orig_bytes,
            self.resp_bytes,
            self.conn_state
        )
    }
}

fn uid(rng: &mut ChaCha8Rng) -> String {
    const ALNUM: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
    let mut s = String::with_capacity(18);
    s.push('C');
    for _ in 0..17 {
        s.push(ALNUM[rng.random_range(0..ALNUM.len())] as char);
    }
    s
}

fn jitter(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let noise = LogNormal::new(0.0, 0.5).expect("valid sigma");
    mean * noise.sample(rng)
}

/// `x` rounded to two significant digits.
fn two_digits(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(x.log10().floor() as i32 - 1);
    (x / scale).round() * scale
}

fn fmt_duration(x: f64) -> String {
    let x = two_digits(x);
    let decimals = (1 - x.log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

fn fmt_bytes(x: f64) -> String {
    format!("{}", two_digits(x).round() as u64)
}

/// Server port, completion, sizes and client port pool shared by every
/// connection between one client and one server.
type FlowShape = (u16, bool, String, String, String, Vec<u16>);

#[allow(clippy::too_many_arguments)]
fn sample_conn(
    rng: &mut ChaCha8Rng,
    classes: &mut BTreeMap<(String, String), FlowShape>,
    ts: f64,
    orig_h: &str,
    orig_role: &RoleSpec,
    target: &RoleSpec,
    resp_h: String,
    pool_size: usize,
) -> SynthConn {
    let shape = target.shape;
    let (resp_p, complete, duration, orig_bytes, resp_bytes, pool) = classes
        .entry((orig_h.to_string(), resp_h.clone()))
        .or_insert_with(|| {
            (
                *target
                    .listen_ports
                    .choose(rng)
                    .expect("validated non-empty"),
                target.proto == Proto::Udp || rng.random::<f64>() < 0.94,
                fmt_duration(jitter(rng, shape.duration)),
                fmt_bytes(jitter(rng, shape.orig_bytes)),
                fmt_bytes(jitter(rng, shape.resp_bytes)),
                (0..pool_size)
                    .map(|_| rng.random_range(EPHEMERAL_PORTS))
                    .collect(),
            )
        })
        .clone();
    let orig_p = match pool.choose(rng) {
        Some(&p) => p,
        None => rng.random_range(EPHEMERAL_PORTS),
    };
    let (duration, orig_bytes, resp_bytes) = if complete {
        (duration, orig_bytes, resp_bytes)
    } else {
        ("-".to_string(), "0".to_string(), "0".to_string())
    };
    SynthConn {
        ts,
        uid: uid(rng),
        tuple: FiveTuple {
            orig_h: orig_h.to_string(),
            orig_p,
            resp_h,
            resp_p,
            proto: target.proto,
        },
        duration,
        orig_bytes,
        resp_bytes,
        conn_state: if complete { "SF" } else { "S0" }.to_string(),
        orig_role: orig_role.name.clone(),
        resp_role: target.name.clone(),
    }
}

/// Samples `n_lines` connections from the role model (no anomaly).
pub fn sample_connections(profile: &NetProfile, n_lines: usize) -> Result<Vec<SynthConn>> {
    profile.validate()?;
    let mut rng = rng_from(profile.seed, &[0x5e7]);
    let initiators: Vec<&RoleSpec> = profile
        .roles
        .iter()
        .filter(|r| r.weight > 0.0 && !r.talks_to.is_empty())
        .collect();
    let total: f64 = initiators.iter().map(|r| r.weight).sum();
    let hosts: BTreeMap<&str, Vec<String>> = profile
        .roles
        .iter()
        .map(|r| (r.name.as_str(), r.hosts()))
        .collect();
    let mut classes = BTreeMap::new();
    let mut out = Vec::with_capacity(n_lines);
    while out.len() < n_lines {
        let i = out.len();
        let mut pick = rng.random::<f64>() * total;
        let mut src = initiators[initiators.len() - 1];
        for r in &initiators {
            if pick < r.weight {
                src = r;
                break;
            }
            pick -= r.weight;
        }
        let orig_h = hosts[src.name.as_str()]
            .choose(&mut rng)
            .expect("non-empty")
            .clone();
        let target = profile
            .role(src.talks_to.choose(&mut rng).expect("non-empty"))
            .expect("validated");
        let candidates: Vec<&String> = hosts[target.name.as_str()]
            .iter()
            .filter(|h| **h != orig_h)
            .collect();
        let Some(resp_h) = candidates.choose(&mut rng).map(|h| (*h).clone()) else {
            // A single-host role talking to itself has no peer; redraw.
            continue;
        };
        let ts = BASE_TS + i as f64 * 0.05 + rng.random::<f64>() * 0.01;
        out.push(sample_conn(
            &mut rng,
            &mut classes,
            ts,
            &orig_h,
            src,
            target,
            resp_h,
            profile.client_ports_per_flow,
        ));
    }
    Ok(out)
}

/// Inserts the planned beacon connections. Returns the new log and the
/// indices of injected lines in it. With no plan or a zero rate the log is
/// returned unchanged.
pub fn inject_anomaly(
    log: Vec<SynthConn>,
    plan: Option<&AnomalyPlan>,
    profile: &NetProfile,
) -> Result<(Vec<SynthConn>, Vec<usize>)> {
    let Some(plan) = plan else {
        return Ok((log, Vec::new()));
    };
    let host_role = profile.role_of(&plan.host).ok_or_else(|| {
        Error::Config(format!("anomaly host {} is not in the profile", plan.host))
    })?;
    if plan.onset > log.len() {
        return Err(Error::Config(format!(
            "anomaly onset {} beyond stream of {} lines",
            plan.onset,
            log.len()
        )));
    }
    let mut rng = rng_from(profile.seed, &[0xa40]);
    let mut out = Vec::with_capacity(log.len() + 16);
    let mut injected = Vec::new();
    for (i, conn) in log.into_iter().enumerate() {
        let ts = conn.ts;
        out.push(conn);
        if i < plan.onset {
            continue;
        }
        let before = ((i - plan.onset) as f64 * plan.rate).floor();
        let after = ((i - plan.onset + 1) as f64 * plan.rate).floor();
        if after > before {
            let mut beacon = SynthConn {
                ts: ts + 0.001,
                uid: uid(&mut rng),
                tuple: FiveTuple {
                    orig_h: plan.host.clone(),
                    orig_p: plan.anomalous_port,
                    resp_h: plan.remote_h.clone(),
                    resp_p: plan.remote_p,
                    proto: Proto::Tcp,
                },
                duration: fmt_duration(jitter(&mut rng, 30.0)),
                orig_bytes: fmt_bytes(jitter(&mut rng, 900.0)),
                resp_bytes: fmt_bytes(jitter(&mut rng, 300.0)),
                conn_state: "SF".into(),
                orig_role: host_role.name.clone(),
                resp_role: EXTERNAL_ROLE.into(),
            };
            beacon.ts = (beacon.ts * 1e6).round() / 1e6;
            injected.push(out.len());
            out.push(beacon);
        }
    }
    Ok((out, injected))
}

/// Rendered outputs of [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub conns: Vec<SynthConn>,
    /// Zeek TSV conn log.
    pub log: String,
    /// `address<TAB>role` for every profile host.
    pub truth_addresses: String,
    /// `five-tuple<TAB>orig_role>resp_role`, one per distinct tuple.
    pub truth_connections: String,
    /// `line_index<TAB>five-tuple` for each injected line.
    pub anomalies: String,
    pub injected: Vec<usize>,
}

/// Zeek TSV for `conns`, with the standard `#` directives.
pub fn render_tsv(conns: &[SynthConn]) -> String {
    let mut s = String::new();
    s.push_str("#separator \\x09\n#set_separator\t,\n#empty_field\t(empty)\n#unset_field\t-\n");
    s.push_str("#path\tconn\n#open\t2020-06-05-14-39-59\n");
    let _ = writeln!(s, "#fields\t{}", FIELDS.join("\t"));
    let _ = writeln!(s, "#types\t{}", TYPES.join("\t"));
    for c in conns {
        s.push_str(&c.tsv_row());
        s.push('\n');
    }
    s.push_str("#close\t2020-06-05-15-39-59\n");
    s
}

pub fn generate(profile: &NetProfile, n_lines: usize) -> Result<SynthOutput> {
    let base = sample_connections(profile, n_lines)?;
    let (conns, injected) = inject_anomaly(base, profile.anomaly.as_ref(), profile)?;
    let mut truth_addresses = String::new();
    for (addr, role) in profile.address_roles() {
        let _ = writeln!(truth_addresses, "{addr}\t{role}");
    }
    let mut seen = BTreeSet::new();
    let mut truth_connections = String::new();
    for c in &conns {
        let key = c.tuple.to_line();
        if seen.insert(key.clone()) {
            let _ = writeln!(truth_connections, "{key}\t{}", c.role_pair());
        }
    }
    let mut anomalies = String::new();
    for &i in &injected {
        let _ = writeln!(anomalies, "{i}\t{}", conns[i].tuple.to_line());
    }
    Ok(SynthOutput {
        log: render_tsv(&conns),
        conns,
        truth_addresses,
        truth_connections,
        anomalies,
        injected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zeek::{read_conn_log, Exclusions};

    #[test]
    fn four_role_truth_counts() {
        let p = NetProfile::four_role(1, 20_000);
        let out = generate(&p, 20_000).unwrap();
        let lines: Vec<&str> = out.truth_addresses.lines().collect();
        assert_eq!(lines.len(), 26);
        let labels: BTreeSet<&str> = lines
            .iter()
            .map(|l| l.split('\t').nth(1).unwrap())
            .collect();
        assert_eq!(labels.len(), 4);
    }

    #[test]
    fn deterministic_in_seed() {
        let p = NetProfile::four_role(5, 2_000);
        assert_eq!(generate(&p, 2_000).unwrap(), generate(&p, 2_000).unwrap());
        let q = NetProfile {
            seed: 6,
            ..p.clone()
        };
        assert_ne!(
            generate(&p, 2_000).unwrap().log,
            generate(&q, 2_000).unwrap().log
        );
    }

    #[test]
    fn ports_never_leak_between_roles() {
        let p = NetProfile::four_role(2, 5_000);
        let out = generate(&p, 5_000).unwrap();
        let mut by_role: BTreeMap<String, BTreeSet<u16>> = BTreeMap::new();
        for c in &out.conns {
            if c.resp_role == EXTERNAL_ROLE {
                continue;
            }
            by_role
                .entry(c.resp_role.clone())
                .or_default()
                .insert(c.tuple.resp_p);
            assert!(EPHEMERAL_PORTS.contains(&c.tuple.orig_p));
            assert_eq!(p.role_of(&c.tuple.resp_h).unwrap().name, c.resp_role);
        }
        for (name, ports) in by_role {
            let expected: BTreeSet<u16> = p
                .role(&name)
                .unwrap()
                .listen_ports
                .iter()
                .copied()
                .collect();
            assert_eq!(ports, expected, "{name}");
        }
    }

    #[test]
    fn onset_and_rate_respected() {
        let n = 20_000;
        let mut p = NetProfile::four_role(3, n);
        p.anomaly = Some(AnomalyPlan {
            host: "10.0.1.25".into(),
            normal_port: 25,
            anomalous_port: 8888,
            onset: 10_000,
            rate: 0.01,
            remote_h: "203.0.113.66".into(),
            remote_p: 443,
        });
        let out = generate(&p, n).unwrap();
        let beacons: Vec<usize> = out
            .conns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.tuple.orig_h == "10.0.1.25" && c.tuple.orig_p == 8888)
            .map(|(i, _)| i)
            .collect();
        assert!(!beacons.is_empty());
        assert!(beacons.iter().all(|&i| i >= 10_000));
        assert_eq!(beacons, out.injected);
        let expected = (n - 10_000) as f64 * 0.01;
        assert!((beacons.len() as f64 - expected).abs() <= 1.0);
        assert_eq!(out.anomalies.lines().count(), beacons.len());
    }

    #[test]
    fn empty_plan_leaves_log_unchanged() {
        let p = NetProfile::four_role(4, 1_000);
        let base = sample_connections(&p, 1_000).unwrap();
        let (same, injected) = inject_anomaly(base.clone(), None, &p).unwrap();
        assert_eq!(same, base);
        assert!(injected.is_empty());
    }

    #[test]
    fn unknown_anomaly_host_rejected() {
        let p = NetProfile::four_role(4, 1_000);
        let base = sample_connections(&p, 100).unwrap();
        let plan = AnomalyPlan {
            host: "192.168.9.9".into(),
            ..p.anomaly.clone().unwrap()
        };
        assert!(matches!(
            inject_anomaly(base, Some(&plan), &p),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn output_parses_cleanly() {
        let p = NetProfile::four_role(8, 3_000);
        let out = generate(&p, 3_000).unwrap();
        let recs = read_conn_log(out.log.as_bytes(), None, &Exclusions::default()).unwrap();
        assert_eq!(recs.len(), out.conns.len());
        for (r, c) in recs.iter().zip(&out.conns) {
            assert_eq!(r.five_tuple(), c.tuple);
        }
    }

    #[test]
    fn roles_separable_by_port_profile() {
        // Bag of (direction, port) counts per host, nearest role centroid.
        let p = NetProfile::four_role(9, 4_000);
        let out = generate(&p, 4_000).unwrap();
        let mut ports = BTreeSet::new();
        let mut bags: BTreeMap<String, BTreeMap<(bool, u16), f64>> = BTreeMap::new();
        for c in &out.conns {
            if c.resp_role == EXTERNAL_ROLE {
                continue;
            }
            let key_o = (false, c.tuple.resp_p);
            let key_r = (true, c.tuple.resp_p);
            ports.insert(key_o);
            ports.insert(key_r);
            *bags
                .entry(c.tuple.orig_h.clone())
                .or_default()
                .entry(key_o)
                .or_default() += 1.0;
            *bags
                .entry(c.tuple.resp_h.clone())
                .or_default()
                .entry(key_r)
                .or_default() += 1.0;
        }
        let ports: Vec<(bool, u16)> = ports.into_iter().collect();
        let vec_of = |bag: &BTreeMap<(bool, u16), f64>| -> Vec<f64> {
            let total: f64 = bag.values().sum();
            ports
                .iter()
                .map(|k| bag.get(k).copied().unwrap_or(0.0) / total)
                .collect()
        };
        let truth = p.address_roles();
        let mut centroids: BTreeMap<&str, (Vec<f64>, f64)> = BTreeMap::new();
        for (addr, role) in &truth {
            let v = vec_of(&bags[addr]);
            let e = centroids
                .entry(role)
                .or_insert((vec![0.0; ports.len()], 0.0));
            e.0.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
            e.1 += 1.0;
        }
        let mut correct = 0;
        for (addr, role) in &truth {
            let v = vec_of(&bags[addr]);
            let best = centroids
                .iter()
                .map(|(r, (sum, n))| {
                    let d: f64 = sum.iter().zip(&v).map(|(s, x)| (s / n - x).powi(2)).sum();
                    (d, *r)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap()
                .1;
            correct += usize::from(best == role);
        }
        assert!(
            correct as f64 / truth.len() as f64 >= 0.9,
            "{correct}/{}",
            truth.len()
        );
    }
}
