//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::HashMap;

use carbonsim::market::{Order, OrderBook, Rejection, Side, Trade};
use carbonsim::{EntPolicySpec, EnterpriseId, EpisodeSpec, GovPolicySpec, SimConfig};

/// splitmix64, mirrored by `tools/gen_reference.py`.
pub struct SplitMix(u64);

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
    }
}

/// One-sided Mann-Whitney U test that `x` tends to exceed `y`. Normal
/// approximation with tie and continuity corrections; returns the p-value.
pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let mut rank_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        rank_x += rank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let total = n1 + n2;
    let u = rank_x - n1 * (n1 + 1.0) / 2.0;
    let var = n1 * n2 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var <= 0.0 {
        return if u > n1 * n2 / 2.0 { 0.0 } else { 1.0 };
    }
    let z = (u - n1 * n2 / 2.0 - 0.5) / var.sqrt();
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Upper tail of the chi-square distribution with `k` degrees of freedom.
pub fn chi_square_sf(x: f64, k: u32) -> f64 {
    // Regularized upper incomplete gamma via series / continued fraction.
    let a = k as f64 / 2.0;
    let x = x / 2.0;
    if x <= 0.0 {
        return 1.0;
    }
    let ln_pre = a * x.ln() - x - libm::lgamma(a);
    if x < a + 1.0 {
        let (mut sum, mut term, mut ap) = (1.0 / a, 1.0 / a, a);
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-15 {
                break;
            }
        }
        1.0 - sum * ln_pre.exp()
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-15 {
                break;
            }
        }
        ln_pre.exp() * h
    }
}

#[derive(serde::Deserialize)]
pub struct Reference {
    pub seed: u64,
    pub cases: usize,
    pub labor_coefficient: Vec<f64>,
    pub utility: Vec<f64>,
    pub power_consumption: Vec<f64>,
    pub green_rate: Vec<f64>,
    pub emission_level: Vec<f64>,
    pub productivity: Vec<f64>,
    pub equality: Vec<f64>,
    pub social_welfare: Vec<f64>,
}

pub fn reference() -> Reference {
    let text = include_str!("../data/reference_formulas.json");
    serde_json::from_str(text).expect("reference fixture parses")
}

pub struct FormulaError {
    pub name: &'static str,
    /// Worst error: relative to the value, except for utility, where it is
    /// relative to the summed magnitudes of its terms.
    pub worst: f64,
    /// Inputs whose plain relative error exceeds 1e-12.
    pub strict_misses: usize,
    pub cases: usize,
}

/// Errors per formula against the reference, in fixture order. Inputs are
/// regenerated from the fixture's seed.
pub fn formula_errors() -> Vec<FormulaError> {
    use carbonsim::enterprise::{emission_level, green_rate_from, labor_coefficient, power_consumption, utility};
    use carbonsim::government::{equality, productivity, social_welfare};

    let r = reference();
    let mut rng = SplitMix::new(r.seed);
    let mut out = Vec::new();
    // `f` returns the value and the magnitude its error is measured against
    // (None for the value itself).
    let mut check = |name: &'static str, want: &[f64], f: &mut dyn FnMut(&mut SplitMix) -> (f64, Option<f64>)| {
        let mut e = FormulaError {
            name,
            worst: 0.0,
            strict_misses: 0,
            cases: want.len(),
        };
        for &w in want {
            let (got, scale) = f(&mut rng);
            let strict = rel_err(got, w);
            if strict > 1e-12 {
                e.strict_misses += 1;
            }
            let err = match scale {
                Some(s) => (got - w).abs() / s,
                None => strict,
            };
            e.worst = e.worst.max(err);
        }
        out.push(e);
    };
    check("labor_coefficient", &r.labor_coefficient, &mut |g| {
        let (t, a, b) = (g.uniform(0.0, 1000.0), g.uniform(0.01, 1.0), g.uniform(1.0, 1000.0));
        (labor_coefficient(t, a, b), None)
    });
    check("utility", &r.utility, &mut |g| {
        let (z, l, c, eta) = (
            g.uniform(0.0, 1e5),
            g.uniform(0.0, 100.0),
            g.uniform(0.0, 1.0),
            g.uniform(0.01, 0.99),
        );
        let k = 1.0 - eta;
        let terms = z.powf(k) / k + 1.0 / k + c * l;
        (utility(z, l, c, eta), Some(terms))
    });
    check("power_consumption", &r.power_consumption, &mut |g| {
        let (rc, n, d) = (g.uniform(0.5, 3.0), g.uniform(0.0, 50.0), g.uniform(0.0, 0.5));
        (power_consumption(rc, n, d), None)
    });
    check("green_rate", &r.green_rate, &mut |g| {
        let pcs: Vec<f64> = (0..5).map(|_| g.uniform(0.0, 1.0)).collect();
        let sizes: Vec<f64> = (0..5).map(|_| g.uniform(0.5, 2.0)).collect();
        let n_p = g.below(20) as usize + 1;
        (
            green_rate_from(pcs.iter().zip(&sizes).map(|(p, s)| p * s).sum(), n_p),
            None,
        )
    });
    check("emission_level", &r.emission_level, &mut |g| {
        let (pc, gr) = (g.uniform(0.0, 1.0), g.uniform(0.0, 1.0));
        (emission_level(pc, gr, 0.1), None)
    });
    check("productivity", &r.productivity, &mut |g| {
        let xs: Vec<f64> = (0..5).map(|_| g.uniform(0.0, 1e4)).collect();
        (productivity(&xs), None)
    });
    check("equality", &r.equality, &mut |g| {
        let xs: Vec<f64> = (0..5).map(|_| g.uniform(0.0, 1e4)).collect();
        (equality(&xs), None)
    });
    check("social_welfare", &r.social_welfare, &mut |g| {
        let (prod, eq, ee, ce) = (
            g.uniform(0.0, 1e5),
            g.uniform(0.0, 1.0),
            g.uniform(0.0, 500.0),
            g.uniform(0.0, 0.1),
        );
        (social_welfare(prod, eq, ee, ce), None)
    });
    out
}

/// Government policies cycled through by the mixed-policy sweeps.
pub fn gov_cycle() -> Vec<GovPolicySpec> {
    let mut v = GovPolicySpec::all_baselines();
    v.push(GovPolicySpec::Random);
    v
}

pub const ENT_CYCLE: [EntPolicySpec; 4] = [
    EntPolicySpec::Scripted,
    EntPolicySpec::Mixed,
    EntPolicySpec::Random,
    EntPolicySpec::NoOp,
];

/// `n` default-config episodes over mixed policies and scattered seeds.
pub fn mixed_specs(n: usize, salt: u64) -> Vec<EpisodeSpec> {
    let govs = gov_cycle();
    let mut rng = SplitMix::new(salt);
    (0..n)
        .map(|i| EpisodeSpec {
            config: SimConfig::default(),
            seed: rng.next_u64(),
            gov: govs[i % govs.len()],
            ent: ENT_CYCLE[i % ENT_CYCLE.len()],
            punishment: [0.0, 20.0, 100.0][i % 3],
        })
        .collect()
}

/// Changes the last digit of line `i`, or `None` if the line has none.
pub fn mutate_line(text: &str, i: usize) -> Option<String> {
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let line = &lines[i];
    let at = line.rfind(|c: char| c.is_ascii_digit())?;
    let d = line.as_bytes()[at];
    let new = if d == b'9' { '0' } else { (d + 1) as char };
    let mut s = line.clone();
    s.replace_range(at..=at, &new.to_string());
    lines[i] = s;
    Some(lines.join("\n") + "\n")
}

/// One step of a random order stream.
#[derive(Debug, Clone, Copy)]
pub enum BookOp {
    Submit { agent: u32, side: Side, price: u32 },
    Tick,
}

pub struct StreamResult {
    pub trades: Vec<Trade>,
    pub rejections: Vec<Option<Rejection>>,
    pub coins: Vec<f64>,
    pub credits: Vec<f64>,
    pub open: Vec<Order>,
}

pub fn random_stream(rng: &mut SplitMix, agents: u32, levels: u32) -> Vec<BookOp> {
    let len = 1 + rng.below(200) as usize;
    (0..len)
        .map(|_| {
            if rng.below(8) == 0 {
                BookOp::Tick
            } else {
                BookOp::Submit {
                    agent: rng.below(agents as u64) as u32,
                    side: if rng.below(2) == 0 { Side::Bid } else { Side::Ask },
                    // Occasionally out of range to exercise rejections.
                    price: rng.below(levels as u64 + 2) as u32,
                }
            }
        })
        .collect()
}

/// Runs a stream through the real book, settling trades and refunding
/// expiries the way the engine does.
pub fn run_book(
    ops: &[BookOp],
    agents: u32,
    levels: u32,
    lifetime: usize,
    limit: usize,
    start: (f64, f64),
) -> StreamResult {
    let mut book = OrderBook::new(levels, lifetime, limit, 3);
    let n = agents as usize;
    let (mut coins, mut credits) = (vec![start.0; n], vec![start.1; n]);
    let mut t = 0;
    let mut rejections = Vec::new();
    for op in ops {
        match *op {
            BookOp::Tick => {
                t += 1;
                for o in book.expire_orders(t) {
                    refund(&o, &mut coins, &mut credits);
                }
            }
            BookOp::Submit { agent, side, price } => {
                let a = agent as usize;
                let (mut c, mut q) = (coins[a], credits[a]);
                match book.submit(EnterpriseId(agent), side, price, t, &mut c, &mut q) {
                    Ok((_, trades)) => {
                        coins[a] = c;
                        credits[a] = q;
                        for tr in trades {
                            settle(&tr, &mut coins, &mut credits);
                        }
                        rejections.push(None);
                    }
                    Err(r) => rejections.push(Some(r)),
                }
            }
        }
    }
    StreamResult {
        trades: book.trades().to_vec(),
        rejections,
        coins,
        credits,
        open: book.bids().chain(book.asks()).copied().collect(),
    }
}

fn refund(o: &Order, coins: &mut [f64], credits: &mut [f64]) {
    match o.side {
        Side::Bid => coins[o.agent.index()] += o.price as f64,
        Side::Ask => credits[o.agent.index()] += 1.0,
    }
}

fn settle(tr: &Trade, coins: &mut [f64], credits: &mut [f64]) {
    coins[tr.buyer.index()] += tr.buyer_refund() as f64;
    credits[tr.buyer.index()] += 1.0;
    coins[tr.seller.index()] += tr.price as f64;
}

/// Quadratic reference matcher: open orders in a plain list, best prices
/// found by linear scans, earliest order first among equals.
pub fn brute_force(
    ops: &[BookOp],
    agents: u32,
    levels: u32,
    lifetime: usize,
    limit: usize,
    start: (f64, f64),
) -> StreamResult {
    let n = agents as usize;
    let (mut coins, mut credits) = (vec![start.0; n], vec![start.1; n]);
    let mut open: Vec<Order> = Vec::new();
    let mut trades = Vec::new();
    let mut rejections = Vec::new();
    let mut next_id = 0;
    let mut t = 0;
    for op in ops {
        match *op {
            BookOp::Tick => {
                t += 1;
                let (gone, kept): (Vec<Order>, Vec<Order>) = open.iter().partition(|o| o.expires_at <= t);
                for o in &gone {
                    refund(o, &mut coins, &mut credits);
                }
                open = kept;
            }
            BookOp::Submit { agent, side, price } => {
                let a = agent as usize;
                let count: HashMap<u32, usize> = open.iter().fold(HashMap::new(), |mut m, o| {
                    *m.entry(o.agent.0).or_default() += 1;
                    m
                });
                let rejection = if price == 0 || price > levels {
                    Some(Rejection::PriceOutOfRange(price))
                } else if count.get(&agent).copied().unwrap_or(0) >= limit {
                    Some(Rejection::OrderLimit)
                } else if side == Side::Bid && coins[a] < price as f64 {
                    Some(Rejection::InsufficientCoins)
                } else if side == Side::Ask && credits[a] < 1.0 {
                    Some(Rejection::InsufficientCredits)
                } else {
                    None
                };
                rejections.push(rejection);
                if rejection.is_some() {
                    continue;
                }
                match side {
                    Side::Bid => coins[a] -= price as f64,
                    Side::Ask => credits[a] -= 1.0,
                }
                open.push(Order {
                    id: next_id,
                    agent: EnterpriseId(agent),
                    side,
                    price,
                    placed_at: t,
                    expires_at: t + lifetime,
                });
                next_id += 1;
                loop {
                    let best_bid = (0..open.len())
                        .filter(|&i| open[i].side == Side::Bid)
                        .min_by_key(|&i| (std::cmp::Reverse(open[i].price), open[i].id));
                    let best_ask = (0..open.len())
                        .filter(|&i| open[i].side == Side::Ask)
                        .min_by_key(|&i| (open[i].price, open[i].id));
                    let (Some(bi), Some(ai)) = (best_bid, best_ask) else {
                        break;
                    };
                    let (bid, ask) = (open[bi], open[ai]);
                    if bid.price < ask.price {
                        break;
                    }
                    let price = if bid.id < ask.id { bid.price } else { ask.price };
                    let tr = Trade {
                        t,
                        buyer: bid.agent,
                        seller: ask.agent,
                        price,
                        bid_id: bid.id,
                        ask_id: ask.id,
                        bid_price: bid.price,
                    };
                    settle(&tr, &mut coins, &mut credits);
                    trades.push(tr);
                    open.retain(|o| o.id != bid.id && o.id != ask.id);
                }
            }
        }
    }
    open.sort_by_key(|o| o.id);
    StreamResult {
        trades,
        rejections,
        coins,
        credits,
        open,
    }
}

/// Compares the real book with the reference on one stream.
pub fn book_matches_oracle(ops: &[BookOp]) -> Result<(), String> {
    let args = (4, 10, 7, 5, (30.0, 3.0));
    let real = run_book(ops, args.0, args.1, args.2, args.3, args.4);
    let want = brute_force(ops, args.0, args.1, args.2, args.3, args.4);
    if real.trades != want.trades {
        return Err(format!("trades differ: {:?} vs {:?}", real.trades, want.trades));
    }
    if real.rejections != want.rejections {
        return Err("rejections differ".into());
    }
    if real.coins != want.coins || real.credits != want.credits {
        return Err("balances differ".into());
    }
    let mut open = real.open.clone();
    open.sort_by_key(|o| o.id);
    if open != want.open {
        return Err("resting orders differ".into());
    }
    Ok(())
}
