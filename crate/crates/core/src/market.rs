//! Continuous double auction for unit carbon credits.
//!
//! Orders are one credit each at an integer price level. Submitting escrows
//! the bid price in coins or one credit for an ask, then runs a matching
//! pass. A crossing pair executes at the resting (earlier) order's price.

use std::cmp::Reverse;
use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::EnterpriseId;

pub type OrderId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub agent: EnterpriseId,
    pub side: Side,
    pub price: u32,
    pub placed_at: usize,
    pub expires_at: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub t: usize,
    pub buyer: EnterpriseId,
    pub seller: EnterpriseId,
    pub price: u32,
    pub bid_id: OrderId,
    pub ask_id: OrderId,
    /// Escrowed bid price; the buyer is refunded `bid_price - price`.
    pub bid_price: u32,
}

impl Trade {
    pub fn buyer_refund(&self) -> u32 {
        self.bid_price - self.price
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum Rejection {
    #[error("price level {0} outside the book's levels")]
    PriceOutOfRange(u32),
    #[error("insufficient coins")]
    InsufficientCoins,
    #[error("insufficient credits")]
    InsufficientCredits,
    #[error("maximum allowed number of open requests reached")]
    OrderLimit,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct PeriodStats {
    price_sum: u64,
    volume: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderBook {
    price_levels: u32,
    order_lifetime: usize,
    max_open_orders: usize,
    history_periods: usize,
    next_id: OrderId,
    bids: BTreeMap<(Reverse<u32>, OrderId), Order>,
    asks: BTreeMap<(u32, OrderId), Order>,
    open_per_agent: Vec<usize>,
    trades: Vec<Trade>,
    history: VecDeque<PeriodStats>,
}

impl OrderBook {
    pub fn new(price_levels: u32, order_lifetime: usize, max_open_orders: usize, history_periods: usize) -> Self {
        let mut history = VecDeque::with_capacity(history_periods);
        history.push_front(PeriodStats::default());
        Self {
            price_levels,
            order_lifetime,
            max_open_orders,
            history_periods,
            next_id: 0,
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            open_per_agent: Vec::new(),
            trades: Vec::new(),
            history,
        }
    }

    pub fn price_levels(&self) -> u32 {
        self.price_levels
    }

    pub fn open_orders(&self, agent: EnterpriseId) -> usize {
        self.open_per_agent.get(agent.index()).copied().unwrap_or(0)
    }

    pub fn can_place(&self, agent: EnterpriseId) -> bool {
        self.open_orders(agent) < self.max_open_orders
    }

    /// Open bids, best first.
    pub fn bids(&self) -> impl Iterator<Item = &Order> {
        self.bids.values()
    }

    /// Open asks, best first.
    pub fn asks(&self) -> impl Iterator<Item = &Order> {
        self.asks.values()
    }

    pub fn best_bid(&self) -> Option<&Order> {
        self.bids.values().next()
    }

    pub fn best_ask(&self) -> Option<&Order> {
        self.asks.values().next()
    }

    pub fn trades(&self) -> &[Trade] {
        &self.trades
    }

    pub fn escrowed_coins(&self) -> f64 {
        self.bids.values().map(|o| o.price as f64).sum()
    }

    pub fn escrowed_credits(&self) -> f64 {
        self.asks.len() as f64
    }

    pub fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b.price >= a.price)
    }

    /// Checks price range, order limit and balance without changing anything.
    pub fn check(
        &self,
        agent: EnterpriseId,
        side: Side,
        price: u32,
        coins: f64,
        credits: f64,
    ) -> Result<(), Rejection> {
        if price == 0 || price > self.price_levels {
            return Err(Rejection::PriceOutOfRange(price));
        }
        if !self.can_place(agent) {
            return Err(Rejection::OrderLimit);
        }
        match side {
            Side::Bid if coins < price as f64 => Err(Rejection::InsufficientCoins),
            Side::Ask if credits < 1.0 => Err(Rejection::InsufficientCredits),
            _ => Ok(()),
        }
    }

    /// Escrows from `coins`/`credits`, rests the order and runs a matching
    /// pass. Returns the new order and any trades; settling the trades with
    /// the counterparties is up to the caller.
    pub fn submit(
        &mut self,
        agent: EnterpriseId,
        side: Side,
        price: u32,
        t: usize,
        coins: &mut f64,
        credits: &mut f64,
    ) -> Result<(Order, Vec<Trade>), Rejection> {
        self.check(agent, side, price, *coins, *credits)?;
        match side {
            Side::Bid => *coins -= price as f64,
            Side::Ask => *credits -= 1.0,
        }
        let order = Order {
            id: self.next_id,
            agent,
            side,
            price,
            placed_at: t,
            expires_at: t + self.order_lifetime,
        };
        self.next_id += 1;
        self.insert(order);
        let trades = self.match_pass(t);
        Ok((order, trades))
    }

    fn insert(&mut self, order: Order) {
        let i = order.agent.index();
        if self.open_per_agent.len() <= i {
            self.open_per_agent.resize(i + 1, 0);
        }
        self.open_per_agent[i] += 1;
        match order.side {
            Side::Bid => self.bids.insert((Reverse(order.price), order.id), order),
            Side::Ask => self.asks.insert((order.price, order.id), order),
        };
    }

    fn release(&mut self, order: &Order) {
        self.open_per_agent[order.agent.index()] -= 1;
    }

    /// Executes trades while the best bid is at or above the best ask.
    pub fn match_pass(&mut self, t: usize) -> Vec<Trade> {
        let mut out = Vec::new();
        while let (Some(bid), Some(ask)) = (self.best_bid().copied(), self.best_ask().copied()) {
            if bid.price < ask.price {
                break;
            }
            self.bids.remove(&(Reverse(bid.price), bid.id));
            self.asks.remove(&(ask.price, ask.id));
            self.release(&bid);
            self.release(&ask);
            // Order ids increase with placement, so the smaller id rests.
            let price = if (bid.placed_at, bid.id) < (ask.placed_at, ask.id) {
                bid.price
            } else {
                ask.price
            };
            let trade = Trade {
                t,
                buyer: bid.agent,
                seller: ask.agent,
                price,
                bid_id: bid.id,
                ask_id: ask.id,
                bid_price: bid.price,
            };
            let stats = self.history.front_mut().expect("history never empty");
            stats.price_sum += price as u64;
            stats.volume += 1;
            self.trades.push(trade);
            out.push(trade);
        }
        out
    }

    /// Removes orders with `expires_at <= t`; the caller refunds escrow.
    pub fn expire_orders(&mut self, t: usize) -> Vec<Order> {
        let expired: Vec<Order> = self
            .bids
            .values()
            .chain(self.asks.values())
            .filter(|o| o.expires_at <= t)
            .copied()
            .collect();
        for o in &expired {
            self.remove(o);
        }
        expired
    }

    fn remove(&mut self, o: &Order) {
        match o.side {
            Side::Bid => self.bids.remove(&(Reverse(o.price), o.id)),
            Side::Ask => self.asks.remove(&(o.price, o.id)),
        };
        self.release(o);
    }

    /// Cancels every open order on one side, best first.
    pub fn cancel_side(&mut self, side: Side) -> Vec<Order> {
        let orders: Vec<Order> = match side {
            Side::Bid => self.bids.values().copied().collect(),
            Side::Ask => self.asks.values().copied().collect(),
        };
        for o in &orders {
            self.remove(o);
        }
        orders
    }

    /// Empties the book for a new episode. Returns the open orders (to be
    /// refunded) and the archived trade list; price history restarts.
    pub fn clear(&mut self) -> (Vec<Order>, Vec<Trade>) {
        let mut open = self.cancel_side(Side::Bid);
        open.extend(self.cancel_side(Side::Ask));
        let trades = std::mem::take(&mut self.trades);
        self.history.clear();
        self.history.push_front(PeriodStats::default());
        (open, trades)
    }

    /// Starts a new price-history period.
    pub fn roll_period(&mut self) {
        self.history.push_front(PeriodStats::default());
        self.history.truncate(self.history_periods);
    }

    /// `[mean price, volume]` per period, current period first, zero-filled
    /// to `2 * history_periods` entries.
    pub fn price_summary(&self) -> Vec<f64> {
        let mut v = vec![0.0; 2 * self.history_periods];
        for (k, s) in self.history.iter().enumerate().take(self.history_periods) {
            if s.volume > 0 {
                v[2 * k] = s.price_sum as f64 / s.volume as f64;
                v[2 * k + 1] = s.volume as f64;
            }
        }
        v
    }

    /// Number of open orders per price level (index `level - 1`).
    pub fn depth(&self, side: Side) -> Vec<u32> {
        let mut d = vec![0; self.price_levels as usize];
        let orders: Box<dyn Iterator<Item = &Order>> = match side {
            Side::Bid => Box::new(self.bids.values()),
            Side::Ask => Box::new(self.asks.values()),
        };
        for o in orders {
            d[o.price as usize - 1] += 1;
        }
        d
    }

    /// Open orders of one agent on one side, per price level.
    pub fn own_depth(&self, agent: EnterpriseId, side: Side) -> Vec<u32> {
        let mut d = vec![0; self.price_levels as usize];
        let it: Box<dyn Iterator<Item = &Order>> = match side {
            Side::Bid => Box::new(self.bids.values()),
            Side::Ask => Box::new(self.asks.values()),
        };
        for o in it.filter(|o| o.agent == agent) {
            d[o.price as usize - 1] += 1;
        }
        d
    }
}
